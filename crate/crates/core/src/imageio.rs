//! PNG import and export. Values are clamped to `[0, 1]` on the way out;
//! both 8- and 16-bit files load.

use std::path::Path;

use image::{DynamicImage, ImageBuffer as Raster, Luma, Rgb, Rgba};

use crate::error::{Error, Result};
use crate::morphable::{PartialTexture, SegmentationMask};
use crate::numerics::ImageBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    Eight,
    #[default]
    Sixteen,
}

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image { path: path.to_path_buf(), source }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    reader.with_guessed_format().map_err(|e| Error::io(path, e))?.decode().map_err(|e| image_err(path, e))
}

fn is_sixteen_bit(img: &DynamicImage) -> bool {
    matches!(
        img,
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) | DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_)
    )
}

fn is_gray(img: &DynamicImage) -> bool {
    !img.color().has_color()
}

/// Loads an image as 1 channel (grayscale files) or 3 channels; alpha is
/// dropped.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let channels = if is_gray(&img) { 1 } else { 3 };
    let mut data = vec![0.0; w * h * channels];
    let plane = w * h;
    if is_sixteen_bit(&img) {
        let raw: Vec<u16> = if channels == 1 { img.into_luma16().into_raw() } else { img.into_rgb16().into_raw() };
        for (i, v) in raw.into_iter().enumerate() {
            data[(i % channels) * plane + i / channels] = v as f64 / 65535.0;
        }
    } else {
        let raw: Vec<u8> = if channels == 1 { img.into_luma8().into_raw() } else { img.into_rgb8().into_raw() };
        for (i, v) in raw.into_iter().enumerate() {
            data[(i % channels) * plane + i / channels] = v as f64 / 255.0;
        }
    }
    ImageBuffer::from_planar(w, h, channels, data)
}

/// Loads an image and converts it to RGB.
pub fn load_rgb(path: &Path) -> Result<ImageBuffer> {
    let img = load_image(path)?;
    Ok(if img.channels() == 1 { img.replicate3() } else { img })
}

pub fn save_image(img: &ImageBuffer, path: &Path, depth: BitDepth) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let channels = img.channels();
    let plane = img.pixels();
    let data = img.data();
    let value = |i: usize| data[(i % channels) * plane + i / channels].clamp(0.0, 1.0);
    let n = plane * channels;
    let result = match (depth, channels) {
        (BitDepth::Eight, 1) => Raster::<Luma<u8>, Vec<u8>>::from_raw(w, h, (0..n).map(|i| (value(i) * 255.0).round() as u8).collect())
            .expect("buffer size")
            .save(path),
        (BitDepth::Eight, _) => Raster::<Rgb<u8>, Vec<u8>>::from_raw(w, h, (0..n).map(|i| (value(i) * 255.0).round() as u8).collect())
            .expect("buffer size")
            .save(path),
        (BitDepth::Sixteen, 1) => {
            Raster::<Luma<u16>, Vec<u16>>::from_raw(w, h, (0..n).map(|i| (value(i) * 65535.0).round() as u16).collect())
                .expect("buffer size")
                .save(path)
        }
        (BitDepth::Sixteen, _) => {
            Raster::<Rgb<u16>, Vec<u16>>::from_raw(w, h, (0..n).map(|i| (value(i) * 65535.0).round() as u16).collect())
                .expect("buffer size")
                .save(path)
        }
    };
    result.map_err(|e| image_err(path, e))
}

/// The values `img` takes after a save/load round trip at `depth`.
pub fn quantize(img: &ImageBuffer, depth: BitDepth) -> ImageBuffer {
    let levels = match depth {
        BitDepth::Eight => 255.0,
        BitDepth::Sixteen => 65535.0,
    };
    let data = img.data().iter().map(|v| (v.clamp(0.0, 1.0) * levels).round() / levels).collect();
    ImageBuffer::from_planar(img.width(), img.height(), img.channels(), data).expect("same shape")
}

/// Nonzero pixels of any channel are valid.
pub fn load_mask(path: &Path) -> Result<SegmentationMask> {
    let img = load_image(path)?;
    Ok(SegmentationMask::from_image(&img))
}

/// Valid pixels white, invalid black, 8-bit grayscale.
pub fn save_mask(mask: &SegmentationMask, path: &Path) -> Result<()> {
    save_image(&mask.to_image(), path, BitDepth::Eight)
}

/// 16-bit RGBA; alpha marks valid texels.
pub fn save_partial(partial: &PartialTexture, path: &Path) -> Result<()> {
    let img = &partial.albedo;
    if img.channels() != 3 {
        return Err(Error::InvalidArgument("partial texture must be RGB".into()));
    }
    partial.validity.matches(img)?;
    let (w, h) = (img.width(), img.height());
    let mut raw = Vec::with_capacity(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            for v in img.rgb(x, y) {
                raw.push((v.clamp(0.0, 1.0) * 65535.0).round() as u16);
            }
            raw.push(if partial.validity.get(x, y) { u16::MAX } else { 0 });
        }
    }
    Raster::<Rgba<u16>, Vec<u16>>::from_raw(w as u32, h as u32, raw).expect("buffer size").save(path).map_err(|e| image_err(path, e))
}

pub fn load_partial(path: &Path) -> Result<PartialTexture> {
    let img = decode(path)?;
    if !img.color().has_alpha() {
        return Err(Error::format("partial texture", format!("{} has no validity alpha channel", path.display())));
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.into_rgba16().into_raw();
    let plane = w * h;
    let mut data = vec![0.0; 3 * plane];
    let mut valid = vec![false; plane];
    for (i, px) in raw.chunks_exact(4).enumerate() {
        for c in 0..3 {
            data[c * plane + i] = px[c] as f64 / 65535.0;
        }
        valid[i] = px[3] > 0;
    }
    Ok(PartialTexture { albedo: ImageBuffer::from_planar(w, h, 3, data)?, validity: SegmentationMask::new(w, h, valid)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ImageBuffer {
        ImageBuffer::from_fn(7, 5, 3, |c, x, y| (x as f64 * 0.13 + y as f64 * 0.07 + c as f64 * 0.21) % 1.0).unwrap()
    }

    #[test]
    fn round_trip_matches_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = sample();
        for depth in [BitDepth::Eight, BitDepth::Sixteen] {
            let path = dir.path().join("t.png");
            save_image(&img, &path, depth).unwrap();
            let back = load_image(&path).unwrap();
            assert_eq!(back, quantize(&img, depth));
        }
        let gray = img.channel(1);
        let path = dir.path().join("g.png");
        save_image(&gray, &path, BitDepth::Sixteen).unwrap();
        assert_eq!(load_image(&path).unwrap(), quantize(&gray, BitDepth::Sixteen));
        assert_eq!(load_rgb(&path).unwrap().channels(), 3);
    }

    #[test]
    fn export_clamps() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuffer::from_fn(2, 1, 1, |_, x, _| if x == 0 { -0.5 } else { 1.7 }).unwrap();
        let path = dir.path().join("c.png");
        save_image(&img, &path, BitDepth::Eight).unwrap();
        assert_eq!(load_image(&path).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mask = SegmentationMask::new(3, 2, vec![true, false, true, false, false, true]).unwrap();
        let path = dir.path().join("m.png");
        save_mask(&mask, &path).unwrap();
        assert_eq!(load_mask(&path).unwrap(), mask);
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_image(Path::new("/nonexistent/input.png")).unwrap_err().to_string();
        assert!(err.contains("/nonexistent/input.png"), "{err}");
    }

    #[test]
    fn partial_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let albedo = sample();
        let validity = SegmentationMask::new(7, 5, (0..35).map(|i| i % 4 != 1).collect()).unwrap();
        let partial = PartialTexture { albedo: albedo.clone(), validity };
        let path = dir.path().join("p.png");
        save_partial(&partial, &path).unwrap();
        let back = load_partial(&path).unwrap();
        assert_eq!(back.validity, partial.validity);
        assert_eq!(back.albedo, quantize(&albedo, BitDepth::Sixteen));
        save_image(&albedo, &path, BitDepth::Sixteen).unwrap();
        assert!(load_partial(&path).is_err());
    }
}
