//! UV-space textures: baking vertex albedo, extracting shading-free albedo
//! from a photograph, and textured preview renders.
//!
//! Texel `(x, y)` of a `size x size` texture sits at `uv = ((x + 0.5) / size,
//! (y + 0.5) / size)`, with `v` growing downward like image rows.

use std::collections::VecDeque;

use super::inputs::SegmentationMask;
use super::model::MorphableModel;
use super::raster::{barycentric, rasterize, SceneGeometry};
use super::scene::SceneParams;
use super::sh::irradiance;
use crate::error::{Error, Result};
use crate::numerics::ImageBuffer;

pub const DEFAULT_TEXTURE_SIZE: usize = 512;
/// Lower bound on the shading divisor.
pub const SHADING_FLOOR: f64 = 1e-3;
/// Largest relative depth gap between a texel's surface point and the
/// visible surface at its sample pixels.
const DEPTH_TOLERANCE: f64 = 0.02;

/// Per-texel source triangle and barycentrics in the UV triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct UvLayout {
    size: usize,
    triangle: Vec<u32>,
    bary: Vec<[f64; 3]>,
    /// Whether the texel center lies inside its triangle; other texels hold
    /// the nearest covered texel's triangle with clamped barycentrics.
    inside: Vec<bool>,
}

impl UvLayout {
    pub fn new(model: &MorphableModel, size: usize) -> Result<Self> {
        if size == 0 || model.triangles().is_empty() {
            return Err(Error::InvalidArgument(format!("texture size {size} with {} triangles", model.triangles().len())));
        }
        let n = size * size;
        let mut triangle = vec![u32::MAX; n];
        let mut bary = vec![[0.0; 3]; n];
        let mut inside = vec![false; n];
        let scale = size as f64;
        let uv = model.uv();
        for (ti, t) in model.triangles().iter().enumerate() {
            let q = t.map(|i| [uv[i as usize][0] * scale, uv[i as usize][1] * scale]);
            if barycentric(q, [0.0, 0.0]).is_none() {
                continue;
            }
            let lo = |k: usize| (q[0][k].min(q[1][k]).min(q[2][k]) - 0.5).ceil().max(0.0) as usize;
            let hi = |k: usize| ((q[0][k].max(q[1][k]).max(q[2][k]) - 0.5).floor().min(scale - 1.0)).max(-1.0);
            let (x1, y1) = (hi(0), hi(1));
            if x1 < 0.0 || y1 < 0.0 {
                continue;
            }
            for y in lo(1)..=y1 as usize {
                for x in lo(0)..=x1 as usize {
                    let i = y * size + x;
                    if inside[i] {
                        continue;
                    }
                    let Some(b) = barycentric(q, [x as f64 + 0.5, y as f64 + 0.5]) else { continue };
                    if b.iter().all(|v| *v >= 0.0) {
                        triangle[i] = ti as u32;
                        bary[i] = b;
                        inside[i] = true;
                    }
                }
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| inside[i]).collect();
        if queue.is_empty() {
            return Err(Error::InvalidArgument(format!("no texel of a {size}x{size} texture lies inside the UV layout")));
        }
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % size, i / size);
            let neighbors = [(x > 0).then(|| i - 1), (x + 1 < size).then(|| i + 1), (y > 0).then(|| i - size), (y + 1 < size).then(|| i + size)];
            for j in neighbors.into_iter().flatten() {
                if triangle[j] == u32::MAX {
                    triangle[j] = triangle[i];
                    queue.push_back(j);
                }
            }
        }
        for i in 0..n {
            if !inside[i] {
                let t = model.triangles()[triangle[i] as usize];
                let q = t.map(|v| [uv[v as usize][0] * scale, uv[v as usize][1] * scale]);
                let p = [(i % size) as f64 + 0.5, (i / size) as f64 + 0.5];
                let b = barycentric(q, p).unwrap_or([1.0 / 3.0; 3]).map(|v| v.max(0.0));
                let s: f64 = b.iter().sum();
                bary[i] = b.map(|v| v / s);
            }
        }
        Ok(Self { size, triangle, bary, inside })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn texel(&self, x: usize, y: usize) -> (u32, [f64; 3], bool) {
        let i = y * self.size + x;
        (self.triangle[i], self.bary[i], self.inside[i])
    }

    pub fn inside_count(&self) -> usize {
        self.inside.iter().filter(|v| **v).count()
    }
}

/// UV albedo with per-texel validity; invalid texels hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialTexture {
    pub albedo: ImageBuffer,
    pub validity: SegmentationMask,
}

impl PartialTexture {
    pub fn valid_fraction(&self) -> f64 {
        self.validity.count() as f64 / (self.validity.width() * self.validity.height()) as f64
    }

    /// Replaces invalid texels by `fill`'s and marks every texel valid.
    pub fn filled_from(&self, fill: &ImageBuffer) -> Result<ImageBuffer> {
        if !fill.same_size(&self.albedo) {
            return Err(Error::DimensionMismatch("hole fill texture size".into()));
        }
        let mut out = self.albedo.clone();
        for y in 0..out.height() {
            for x in 0..out.width() {
                if !self.validity.get(x, y) {
                    out.set_rgb(x, y, fill.rgb(x, y));
                }
            }
        }
        Ok(out)
    }
}

/// Vertex albedo of `I(al)` interpolated over the UV triangulation, clamped
/// to `[0, 1]`.
pub fn bake_lowfreq_texture(model: &MorphableModel, al: &[f64], size: usize) -> Result<ImageBuffer> {
    let albedo = model.albedo(al)?;
    let layout = UvLayout::new(model, size)?;
    bake_with_layout(model, &layout, &albedo)
}

pub(crate) fn bake_with_layout(model: &MorphableModel, layout: &UvLayout, albedo: &[[f64; 3]]) -> Result<ImageBuffer> {
    let size = layout.size;
    let mut img = ImageBuffer::new(size, size, 3)?;
    for y in 0..size {
        for x in 0..size {
            let (t, b, _) = layout.texel(x, y);
            let tri = model.triangles()[t as usize];
            let mut c = [0.0; 3];
            for k in 0..3 {
                let a = albedo[tri[k] as usize];
                for ch in 0..3 {
                    c[ch] += b[k] * a[ch];
                }
            }
            img.set_rgb(x, y, c.map(|v| v.clamp(0.0, 1.0)));
        }
    }
    Ok(img)
}

/// Divides the photograph by the fitted SH shading and maps the result to
/// every texel whose surface point is visible, front-facing, and inside the
/// mask.
///
/// Each covered pixel is divided by the shading of the surface point it
/// shows; a texel then samples that shading-free image bilinearly at the
/// projection of its own surface point, and counts as visible only when all
/// four sample pixels show the same surface (covered, valid in the mask, and
/// within a small relative depth gap).
pub fn extract_partial_albedo(
    image: &ImageBuffer,
    params: &SceneParams,
    mask: &SegmentationMask,
    model: &MorphableModel,
    size: usize,
) -> Result<PartialTexture> {
    mask.matches(image)?;
    if image.channels() != 3 {
        return Err(Error::InvalidArgument("albedo extraction needs an RGB image".into()));
    }
    let layout = UvLayout::new(model, size)?;
    let geom = SceneGeometry::new(model, params, &params.camera)?;
    let vis = rasterize(model, &geom, image.width(), image.height());
    // shading-free image: each covered pixel divided by the shading of the
    // surface point it shows
    let mut unshaded = ImageBuffer::new(image.width(), image.height(), 3)?;
    for y in 0..image.height() {
        for x in 0..image.width() {
            if let Some(t) = vis.triangle(x, y) {
                let s = geom.surface(model.triangles()[t as usize], vis.barycentrics(x, y));
                let e = irradiance(&params.light, s.normal);
                let c = image.rgb(x, y);
                unshaded.set_rgb(x, y, [0, 1, 2].map(|k| c[k] / e[k].max(SHADING_FLOOR)));
            }
        }
    }
    let mut albedo = ImageBuffer::new(size, size, 3)?;
    let mut valid = vec![false; size * size];
    let (w, h) = (image.width() as f64, image.height() as f64);
    for y in 0..size {
        for x in 0..size {
            let (t, b, inside) = layout.texel(x, y);
            if !inside {
                continue;
            }
            let tri = model.triangles()[t as usize];
            if !geom.is_front_facing(tri) {
                continue;
            }
            let (Some(q0), Some(q1), Some(q2)) = (geom.projected[tri[0] as usize], geom.projected[tri[1] as usize], geom.projected[tri[2] as usize])
            else {
                continue;
            };
            let q = [0, 1].map(|k| b[0] * q0[k] + b[1] * q1[k] + b[2] * q2[k]);
            let depth: f64 = (0..3).map(|k| b[k] * geom.camera_points[tri[k] as usize][2]).sum();
            let fx = q[0] - 0.5;
            let fy = q[1] - 0.5;
            if fx < 0.0 || fy < 0.0 || fx >= w - 1.0 || fy >= h - 1.0 {
                continue;
            }
            let (px, py) = (fx.floor() as usize, fy.floor() as usize);
            let visible = [(px, py), (px + 1, py), (px, py + 1), (px + 1, py + 1)]
                .iter()
                .all(|&(sx, sy)| vis.is_covered(sx, sy) && mask.get(sx, sy) && (vis.depth(sx, sy) - depth).abs() <= DEPTH_TOLERANCE * depth);
            if !visible {
                continue;
            }
            let texel = [0, 1, 2].map(|c| unshaded.sample_bilinear(c, q[0], q[1]).clamp(0.0, 1.0));
            albedo.set_rgb(x, y, texel);
            valid[y * size + x] = true;
        }
    }
    Ok(PartialTexture { albedo, validity: SegmentationMask::new(size, size, valid)? })
}

/// SH-lit render of the model with albedo looked up in a UV texture.
pub fn render_textured(model: &MorphableModel, params: &SceneParams, texture: &ImageBuffer, width: usize, height: usize) -> Result<ImageBuffer> {
    if texture.channels() != 3 {
        return Err(Error::InvalidArgument("preview texture must be RGB".into()));
    }
    let geom = SceneGeometry::new(model, params, &params.camera)?;
    let vis = rasterize(model, &geom, width, height);
    let uv = model.uv();
    let mut img = ImageBuffer::new(width, height, 3)?;
    let (tw, th) = (texture.width() as f64, texture.height() as f64);
    for y in 0..height {
        for x in 0..width {
            let Some(t) = vis.triangle(x, y) else { continue };
            let tri = model.triangles()[t as usize];
            let b = vis.barycentrics(x, y);
            let u = (0..3).map(|k| b[k] * uv[tri[k] as usize][0]).sum::<f64>() * tw;
            let v = (0..3).map(|k| b[k] * uv[tri[k] as usize][1]).sum::<f64>() * th;
            let e = irradiance(&params.light, geom.surface(tri, b).normal);
            img.set_rgb(x, y, [0, 1, 2].map(|c| (texture.sample_bilinear(c, u, v) * e[c]).clamp(0.0, 1.0)));
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphable::raster::render_synth;
    use crate::morphable::scene::quaternion_exp;
    use crate::morphable::sh::constant_light;
    use crate::morphable::toy::{toy_model, toy_scene, GRID};

    #[test]
    fn vertex_texels_hold_vertex_albedo() {
        let model = toy_model();
        let size = 3 * GRID;
        let tex = bake_lowfreq_texture(&model, &vec![0.0; model.dims().2], size).unwrap();
        let layout = UvLayout::new(&model, size).unwrap();
        let mean = model.mean_albedo();
        let mut checked = 0;
        for j in 0..GRID {
            for i in 0..GRID {
                let (x, y) = (3 * i + 1, 3 * j + 1);
                if !layout.texel(x, y).2 {
                    continue;
                }
                let v = j * GRID + i;
                let c = tex.rgb(x, y);
                for k in 0..3 {
                    assert!((c[k] - mean[3 * v + k]).abs() < 1e-12, "vertex {v}");
                }
                checked += 1;
            }
        }
        assert!(checked > 300, "{checked}");
    }

    #[test]
    fn bake_interpolates_inside_triangles() {
        let model = toy_model();
        let size = 97;
        let al: Vec<f64> = model.sigma_albedo().iter().map(|s| -s).collect();
        let albedo = model.albedo(&al).unwrap();
        let tex = bake_lowfreq_texture(&model, &al, size).unwrap();
        let uv = model.uv();
        let mut checked = 0;
        for (ti, t) in model.triangles().iter().enumerate().step_by(17) {
            let q = t.map(|v| uv[v as usize].map(|c| c * size as f64));
            let centroid = [0, 1].map(|k| (q[0][k] + q[1][k] + q[2][k]) / 3.0);
            let (x, y) = (centroid[0].floor() as usize, centroid[1].floor() as usize);
            let p = [x as f64 + 0.5, y as f64 + 0.5];
            // solve p = q0 + u (q1 - q0) + v (q2 - q0)
            let (a, b, c, d) = (q[1][0] - q[0][0], q[2][0] - q[0][0], q[1][1] - q[0][1], q[2][1] - q[0][1]);
            let det = a * d - b * c;
            let u = ((p[0] - q[0][0]) * d - b * (p[1] - q[0][1])) / det;
            let v = (a * (p[1] - q[0][1]) - c * (p[0] - q[0][0])) / det;
            if u < 0.0 || v < 0.0 || u + v > 1.0 {
                continue;
            }
            let w = [1.0 - u - v, u, v];
            let got = tex.rgb(x, y);
            for ch in 0..3 {
                let want: f64 = (0..3).map(|k| w[k] * albedo[t[k] as usize][ch]).sum();
                assert!((got[ch] - want).abs() < 1e-12, "triangle {ti}");
            }
            checked += 1;
        }
        assert!(checked > 20, "{checked}");
    }

    #[test]
    fn unit_shading_returns_image_values() {
        let model = toy_model();
        let mut params = toy_scene(&model, 128, 128);
        params.light = constant_light([1.0; 3]);
        let image = ImageBuffer::from_fn(128, 128, 3, |c, _, _| 0.2 + 0.1 * c as f64).unwrap();
        let part = extract_partial_albedo(&image, &params, &SegmentationMask::full(128, 128), &model, 64).unwrap();
        assert!(part.valid_fraction() > 0.4);
        for y in 0..64 {
            for x in 0..64 {
                let c = part.albedo.rgb(x, y);
                if part.validity.get(x, y) {
                    for k in 0..3 {
                        assert!((c[k] - (0.2 + 0.1 * k as f64)).abs() < 1e-12);
                    }
                } else {
                    assert_eq!(c, [0.0; 3]);
                }
            }
        }
    }

    #[test]
    fn shading_is_divided_out() {
        let model = toy_model();
        let size = 512;
        let params = toy_scene(&model, size, size);
        let (image, _) = render_synth(&model, &params, size, size).unwrap();
        let part = extract_partial_albedo(&image, &params, &SegmentationMask::full(size, size), &model, 128).unwrap();
        let truth = bake_lowfreq_texture(&model, &params.coeffs.albedo, 128).unwrap();
        let mut worst = 0.0f64;
        for y in 0..128 {
            for x in 0..128 {
                if part.validity.get(x, y) {
                    let (a, b) = (part.albedo.rgb(x, y), truth.rgb(x, y));
                    worst = (0..3).fold(worst, |m, c| m.max((a[c] - b[c]).abs()));
                }
            }
        }
        assert!(part.valid_fraction() > 0.6);
        assert!(worst < 2e-3, "{worst}");
    }

    #[test]
    fn hidden_surfaces_are_invalid() {
        let model = toy_model();
        let mut params = toy_scene(&model, 96, 96);
        let image = ImageBuffer::from_fn(96, 96, 3, |_, _, _| 0.5).unwrap();
        let empty = SegmentationMask::new(96, 96, vec![false; 96 * 96]).unwrap();
        assert_eq!(extract_partial_albedo(&image, &params, &empty, &model, 32).unwrap().validity.count(), 0);
        // seen from behind every triangle is back-facing
        params.rotation = quaternion_exp([0.0, std::f64::consts::PI, 0.0]);
        let part = extract_partial_albedo(&image, &params, &SegmentationMask::full(96, 96), &model, 32).unwrap();
        assert_eq!(part.validity.count(), 0);
    }

    #[test]
    fn textured_render_matches_vertex_render() {
        let model = toy_model();
        let params = toy_scene(&model, 160, 160);
        let (direct, vis) = render_synth(&model, &params, 160, 160).unwrap();
        let tex = bake_lowfreq_texture(&model, &params.coeffs.albedo, 1024).unwrap();
        let preview = render_textured(&model, &params, &tex, 160, 160).unwrap();
        let mut worst = 0.0f64;
        for y in 0..160 {
            for x in 0..160 {
                let (a, b) = (direct.rgb(x, y), preview.rgb(x, y));
                if vis.is_covered(x, y) {
                    worst = (0..3).fold(worst, |m, c| m.max((a[c] - b[c]).abs()));
                } else {
                    assert_eq!(b, [0.0; 3]);
                }
            }
        }
        assert!(worst < 5e-3, "{worst}");
    }
}
