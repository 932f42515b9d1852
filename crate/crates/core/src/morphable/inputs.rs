use std::fmt::Write as _;

use super::model::MorphableModel;
use crate::error::{Error, Result};
use crate::numerics::ImageBuffer;

/// Minimum landmark count for a well-posed pose solve.
pub const MIN_LANDMARKS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub vertex: usize,
    /// Image position in pixels.
    pub point: [f64; 2],
}

/// 2-D feature positions tied to model vertices.
///
/// Text form: one `vertex_index x y` per line; blank lines and lines
/// starting with `#` are ignored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Landmarks(pub Vec<Landmark>);

impl Landmarks {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::format("landmarks", format!("line {}: expected `vertex_index x y`, got {line:?}", n + 1));
            if parts.len() != 3 {
                return Err(bad());
            }
            let vertex = parts[0].parse().map_err(|_| bad())?;
            let x: f64 = parts[1].parse().map_err(|_| bad())?;
            let y: f64 = parts[2].parse().map_err(|_| bad())?;
            if !(x.is_finite() && y.is_finite()) {
                return Err(bad());
            }
            out.push(Landmark { vertex, point: [x, y] });
        }
        Ok(Self(out))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.0 {
            let _ = writeln!(s, "{} {:?} {:?}", l.vertex, l.point[0], l.point[1]);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, model: &MorphableModel) -> Result<()> {
        if self.0.len() < MIN_LANDMARKS {
            return Err(Error::InvalidArgument(format!("{} landmarks, at least {MIN_LANDMARKS} required", self.0.len())));
        }
        if let Some(l) = self.0.iter().find(|l| l.vertex >= model.vertex_count()) {
            return Err(Error::InvalidArgument(format!("landmark vertex {} past {} vertices", l.vertex, model.vertex_count())));
        }
        Ok(())
    }

    /// Landmarks in the coordinates of an image resized by `factor`, where
    /// pixel centers map onto pixel centers.
    pub fn rescaled(&self, factor: f64) -> Self {
        Self(
            self.0
                .iter()
                .map(|l| Landmark { vertex: l.vertex, point: [(l.point[0] - 0.5) * factor + 0.5, (l.point[1] - 0.5) * factor + 0.5] })
                .collect(),
        )
    }
}

/// Per-pixel face validity.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask {
    width: usize,
    height: usize,
    valid: Vec<bool>,
}

impl SegmentationMask {
    pub fn new(width: usize, height: usize, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != width * height {
            return Err(Error::DimensionMismatch(format!("{} mask values for {width}x{height}", valid.len())));
        }
        Ok(Self { width, height, valid })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, valid: vec![true; width * height] }
    }

    /// Nonzero first-channel pixels are valid.
    pub fn from_image(image: &ImageBuffer) -> Self {
        let valid = image.plane(0).iter().map(|v| *v > 0.0).collect();
        Self { width: image.width(), height: image.height(), valid }
    }

    pub fn to_image(&self) -> ImageBuffer {
        let data = self.valid.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();
        ImageBuffer::from_planar(self.width, self.height, 1, data).expect("mask dims are consistent")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.valid
    }

    pub fn count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn matches(&self, image: &ImageBuffer) -> Result<()> {
        if image.width() != self.width || image.height() != self.height {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs image {}x{}",
                self.width,
                self.height,
                image.width(),
                image.height()
            )));
        }
        Ok(())
    }

    /// Keeps pixel `(s X, s Y)` as pixel `(X, Y)`.
    pub fn decimate(&self, s: usize) -> Self {
        let (w, h) = (self.width / s, self.height / s);
        let valid = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| self.get(s * x, s * y)).collect();
        Self { width: w, height: h, valid }
    }
}
