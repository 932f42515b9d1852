//! NTSC YIQ conversion.

use crate::error::{Error, Result};
use crate::numerics::ImageBuffer;

pub const RGB_TO_YIQ: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [0.596, -0.274, -0.322],
    [0.211, -0.523, 0.312],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorDirection {
    RgbToYiq,
    YiqToRgb,
}

/// Exact inverse of [`RGB_TO_YIQ`] by cofactor expansion.
pub fn yiq_to_rgb_matrix() -> [[f64; 3]; 3] {
    invert3(&RGB_TO_YIQ)
}

pub(crate) fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let inv_det = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, value) in row.iter_mut().enumerate() {
            // adjugate: transpose of the cofactor matrix
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            *value = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) * inv_det;
        }
    }
    out
}

#[inline]
pub fn apply3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn color_convert(image: &ImageBuffer, direction: ColorDirection) -> Result<ImageBuffer> {
    if image.channels() != 3 {
        return Err(Error::InvalidArgument(format!(
            "color conversion needs 3 channels, got {}",
            image.channels()
        )));
    }
    let m = match direction {
        ColorDirection::RgbToYiq => RGB_TO_YIQ,
        ColorDirection::YiqToRgb => yiq_to_rgb_matrix(),
    };
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            out.set_rgb(x, y, apply3(&m, image.rgb(x, y)));
        }
    }
    Ok(out)
}

/// Luma plane of an RGB image as a single-channel buffer.
pub fn luma(image: &ImageBuffer) -> Result<ImageBuffer> {
    if image.channels() == 1 {
        return Ok(image.clone());
    }
    Ok(color_convert(image, ColorDirection::RgbToYiq)?.channel(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(rgb: [f64; 3]) -> ImageBuffer {
        let mut img = ImageBuffer::new(1, 1, 3).unwrap();
        img.set_rgb(0, 0, rgb);
        img
    }

    #[test]
    fn white_has_no_chroma() {
        let yiq = color_convert(&single([1.0, 1.0, 1.0]), ColorDirection::RgbToYiq).unwrap();
        let [y, i, q] = yiq.rgb(0, 0);
        assert!((y - 1.0).abs() < 1e-12);
        assert!(i.abs() < 1e-12 && q.abs() < 1e-12);
    }

    #[test]
    fn red_luma_is_first_row() {
        let yiq = color_convert(&single([1.0, 0.0, 0.0]), ColorDirection::RgbToYiq).unwrap();
        assert_eq!(yiq.get(0, 0, 0), 0.299);
    }

    #[test]
    fn round_trip_random_image() {
        let mut state = 12345u64;
        let img = ImageBuffer::from_fn(17, 9, 3, |_, _, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .unwrap();
        let yiq = color_convert(&img, ColorDirection::RgbToYiq).unwrap();
        let back = color_convert(&yiq, ColorDirection::YiqToRgb).unwrap();
        let err = img.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "round trip error {err}");
    }

    #[test]
    fn single_channel_rejected() {
        let img = ImageBuffer::new(2, 2, 1).unwrap();
        assert!(color_convert(&img, ColorDirection::RgbToYiq).is_err());
    }
}
