use crate::error::{Error, Result};

/// Planar floating-point image with 1 or 3 channels.
///
/// Storage is channel-major: `data[c * width * height + y * width + x]`.
/// Values are nominally in `[0, 1]`; clamping happens at PNG import and
/// export, so intermediate buffers (for instance YIQ chroma planes) may hold
/// any finite value.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        check_channels(channels)?;
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("empty image {width}x{height}")));
        }
        Ok(Self { width, height, channels, data: vec![value; width * height * channels] })
    }

    pub fn from_planar(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_channels(channels)?;
        if data.len() != width * height * channels || width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data".into()));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut img = Self::new(width, height, channels)?;
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    img.set(c, x, y, f(c, x, y));
                }
            }
        }
        Ok(img)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[c * self.pixels() + y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        let idx = c * self.pixels() + y * self.width + x;
        self.data[idx] = v;
    }

    pub fn rgb(&self, x: usize, y: usize) -> [f64; 3] {
        if self.channels == 1 {
            let v = self.get(0, x, y);
            [v, v, v]
        } else {
            [self.get(0, x, y), self.get(1, x, y), self.get(2, x, y)]
        }
    }

    pub fn set_rgb(&mut self, x: usize, y: usize, v: [f64; 3]) {
        for (c, value) in v.iter().enumerate().take(self.channels) {
            self.set(c, x, y, *value);
        }
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.pixels();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_size(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Single-channel image holding plane `c`.
    pub fn channel(&self, c: usize) -> ImageBuffer {
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.plane(c).to_vec(),
        }
    }

    /// Replicates a single plane into three channels.
    pub fn replicate3(&self) -> ImageBuffer {
        let plane = self.plane(0);
        let mut data = Vec::with_capacity(plane.len() * 3);
        for _ in 0..3 {
            data.extend_from_slice(plane);
        }
        ImageBuffer { width: self.width, height: self.height, channels: 3, data }
    }

    pub fn clamped(&self) -> ImageBuffer {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        out
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// `i + 0.5`), clamped at the borders.
    pub fn sample_bilinear(&self, c: usize, x: f64, y: f64) -> f64 {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let top = self.get(c, x0, y0) * (1.0 - tx) + self.get(c, x1, y0) * tx;
        let bottom = self.get(c, x0, y1) * (1.0 - tx) + self.get(c, x1, y1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    /// Bilinear resampling to a new resolution (pixel-center aligned).
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<ImageBuffer> {
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        ImageBuffer::from_fn(width, height, self.channels, |c, x, y| {
            self.sample_bilinear(c, (x as f64 + 0.5) * sx, (y as f64 + 0.5) * sy)
        })
    }

    /// Area-average downsampling by an integer factor.
    pub fn downsample_box(&self, factor: usize) -> Result<ImageBuffer> {
        if factor == 0 || self.width < factor || self.height < factor {
            return Err(Error::InvalidArgument(format!("downsample factor {factor}")));
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let norm = 1.0 / (factor * factor) as f64;
        ImageBuffer::from_fn(w, h, self.channels, |c, x, y| {
            let mut acc = 0.0;
            for dy in 0..factor {
                for dx in 0..factor {
                    acc += self.get(c, x * factor + dx, y * factor + dy);
                }
            }
            acc * norm
        })
    }

    /// Separable Gaussian blur with clamp-to-edge borders.
    pub fn gaussian_blur(&self, sigma: f64) -> ImageBuffer {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
        let (w, h) = (self.width as isize, self.height as isize);
        let mut tmp = self.clone();
        let mut out = self.clone();
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (ki, k) in kernel.iter().enumerate() {
                        let sx = (x + ki as isize - radius).clamp(0, w - 1);
                        acc += k * self.get(c, sx as usize, y as usize);
                    }
                    tmp.set(c, x as usize, y as usize, acc);
                }
            }
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (ki, k) in kernel.iter().enumerate() {
                        let sy = (y + ki as isize - radius).clamp(0, h - 1);
                        acc += k * tmp.get(c, x as usize, sy as usize);
                    }
                    out.set(c, x as usize, y as usize, acc);
                }
            }
        }
        out
    }
}

fn check_channels(channels: usize) -> Result<()> {
    if channels == 1 || channels == 3 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{channels} channels (expected 1 or 3)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_planar() {
        let img = ImageBuffer::from_fn(3, 2, 3, |c, x, y| (c * 100 + y * 10 + x) as f64).unwrap();
        assert_eq!(img.get(2, 1, 1), 211.0);
        assert_eq!(img.plane(1)[4], 111.0);
        assert_eq!(img.rgb(2, 0), [2.0, 102.0, 202.0]);
    }

    #[test]
    fn rejects_two_channels() {
        assert!(ImageBuffer::new(4, 4, 2).is_err());
    }

    #[test]
    fn box_downsample_averages_blocks() {
        let img = ImageBuffer::from_fn(4, 2, 1, |_, x, _| x as f64).unwrap();
        let d = img.downsample_box(2).unwrap();
        assert_eq!(d.plane(0), &[0.5, 2.5]);
    }

    #[test]
    fn blur_preserves_constants() {
        let img = ImageBuffer::filled(9, 7, 3, 0.25).unwrap();
        let b = img.gaussian_blur(1.5);
        assert!(b.data().iter().all(|v| (v - 0.25).abs() < 1e-12));
    }
}
