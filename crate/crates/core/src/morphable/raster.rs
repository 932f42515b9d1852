//! Z-buffered triangle rasterization with screen-space barycentrics.
//!
//! Pixel `(x, y)` is sampled at its center `(x + 0.5, y + 0.5)`. A triangle
//! is front-facing when its geometric normal points toward the camera
//! center. Triangles are visited in index order and a pixel only changes
//! owner on a strictly nearer depth, so ties keep the earlier triangle.

use super::model::{cross, dot, norm, sub, vertex_normal_sums, MorphableModel};
use super::scene::{mat_vec, Camera, Mat3, SceneParams};
use super::sh::{irradiance, SH_LIGHT_LEN};
use crate::error::{Error, Result};
use crate::numerics::ImageBuffer;

pub const NO_TRIANGLE: u32 = u32::MAX;

/// Per-pixel source triangle, barycentrics, and depth of the visible surface.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityBuffer {
    width: usize,
    height: usize,
    triangle: Vec<u32>,
    bary: Vec<[f64; 3]>,
    depth: Vec<f64>,
}

impl VisibilityBuffer {
    fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self { width, height, triangle: vec![NO_TRIANGLE; n], bary: vec![[0.0; 3]; n], depth: vec![f64::INFINITY; n] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn triangle(&self, x: usize, y: usize) -> Option<u32> {
        let t = self.triangle[y * self.width + x];
        (t != NO_TRIANGLE).then_some(t)
    }

    #[inline]
    pub fn is_covered(&self, x: usize, y: usize) -> bool {
        self.triangle[y * self.width + x] != NO_TRIANGLE
    }

    #[inline]
    pub fn barycentrics(&self, x: usize, y: usize) -> [f64; 3] {
        self.bary[y * self.width + x]
    }

    #[inline]
    pub fn depth(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn coverage(&self) -> usize {
        self.triangle.iter().filter(|t| **t != NO_TRIANGLE).count()
    }
}

#[inline]
pub(crate) fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Screen-space barycentrics of `p`; `None` for a degenerate triangle.
#[inline]
pub(crate) fn barycentric(q: [[f64; 2]; 3], p: [f64; 2]) -> Option<[f64; 3]> {
    let d = edge(q[0], q[1], q[2]);
    if d.abs() < 1e-12 {
        return None;
    }
    Some([edge(q[1], q[2], p) / d, edge(q[2], q[0], p) / d, edge(q[0], q[1], p) / d])
}

/// Vertex data of a posed model, in model and camera space.
#[derive(Debug, Clone)]
pub struct SceneGeometry {
    pub rotation: Mat3,
    pub vertices: Vec<[f64; 3]>,
    pub albedo: Vec<[f64; 3]>,
    /// Unnormalized model-space vertex normals.
    pub normal_sums: Vec<[f64; 3]>,
    pub camera_points: Vec<[f64; 3]>,
    /// Unit vertex normals rotated into camera space.
    pub camera_normals: Vec<[f64; 3]>,
    pub projected: Vec<Option<[f64; 2]>>,
}

impl SceneGeometry {
    pub fn new(model: &MorphableModel, params: &SceneParams, camera: &Camera) -> Result<Self> {
        params.validate(model)?;
        if !(camera.focal.is_finite() && camera.focal > 0.0) {
            return Err(Error::DegenerateCamera(format!("focal length {}", camera.focal)));
        }
        let rotation = params.rotation_matrix();
        let vertices = model.shape(&params.coeffs.id, &params.coeffs.exp)?;
        let albedo = model.albedo(&params.coeffs.albedo)?;
        let normal_sums = vertex_normal_sums(model.triangles(), &vertices);
        let camera_points = params.transform(&vertices);
        let camera_normals = normal_sums
            .iter()
            .map(|s| {
                let l = norm(*s);
                let n = if l > 0.0 { [s[0] / l, s[1] / l, s[2] / l] } else { [0.0, 0.0, -1.0] };
                mat_vec(&rotation, n)
            })
            .collect();
        let projected = camera_points.iter().map(|p| camera.project(*p)).collect();
        Ok(Self { rotation, vertices, albedo, normal_sums, camera_points, camera_normals, projected })
    }

    pub fn is_front_facing(&self, t: [u32; 3]) -> bool {
        let [a, b, c] = t.map(|i| self.camera_points[i as usize]);
        dot(cross(sub(b, a), sub(c, a)), a) < 0.0
    }

    /// Unit interpolated normal, interpolated albedo, and the raw
    /// interpolated normal at barycentrics `b` of triangle `t`.
    #[inline]
    pub fn surface(&self, t: [u32; 3], b: [f64; 3]) -> SurfacePoint {
        let mut m = [0.0; 3];
        let mut a = [0.0; 3];
        for k in 0..3 {
            let n = self.camera_normals[t[k] as usize];
            let al = self.albedo[t[k] as usize];
            for c in 0..3 {
                m[c] += b[k] * n[c];
                a[c] += b[k] * al[c];
            }
        }
        let len = norm(m);
        let normal = if len > 1e-12 { [m[0] / len, m[1] / len, m[2] / len] } else { [0.0, 0.0, -1.0] };
        SurfacePoint { albedo: a, raw_normal: m, normal, normal_len: len }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint {
    pub albedo: [f64; 3],
    pub raw_normal: [f64; 3],
    pub normal: [f64; 3],
    pub normal_len: f64,
}

pub fn rasterize(model: &MorphableModel, geom: &SceneGeometry, width: usize, height: usize) -> VisibilityBuffer {
    let mut vis = VisibilityBuffer::new(width, height);
    for (ti, &t) in model.triangles().iter().enumerate() {
        let (Some(q0), Some(q1), Some(q2)) = (geom.projected[t[0] as usize], geom.projected[t[1] as usize], geom.projected[t[2] as usize])
        else {
            continue;
        };
        if !geom.is_front_facing(t) {
            continue;
        }
        let q = [q0, q1, q2];
        let z = t.map(|i| geom.camera_points[i as usize][2]);
        let lo = |a: f64, b: f64, c: f64| (a.min(b).min(c) - 0.5).ceil().max(0.0);
        let hi = |a: f64, b: f64, c: f64, n: usize| (a.max(b).max(c) - 0.5).floor().min(n as f64 - 1.0);
        let (x0, x1) = (lo(q0[0], q1[0], q2[0]), hi(q0[0], q1[0], q2[0], width));
        let (y0, y1) = (lo(q0[1], q1[1], q2[1]), hi(q0[1], q1[1], q2[1], height));
        if x0 > x1 || y0 > y1 {
            continue;
        }
        if barycentric(q, [0.0, 0.0]).is_none() {
            continue;
        }
        for y in y0 as usize..=y1 as usize {
            for x in x0 as usize..=x1 as usize {
                let Some(b) = barycentric(q, [x as f64 + 0.5, y as f64 + 0.5]) else {
                    continue;
                };
                if b.iter().any(|v| *v < 0.0) {
                    continue;
                }
                let d = b[0] * z[0] + b[1] * z[1] + b[2] * z[2];
                let i = y * width + x;
                if d < vis.depth[i] {
                    vis.depth[i] = d;
                    vis.triangle[i] = ti as u32;
                    vis.bary[i] = b;
                }
            }
        }
    }
    vis
}

/// `albedo * irradiance(normal)` per channel.
#[inline]
pub fn shade(surface: &SurfacePoint, light: &[f64; SH_LIGHT_LEN]) -> [f64; 3] {
    let e = irradiance(light, surface.normal);
    [surface.albedo[0] * e[0], surface.albedo[1] * e[1], surface.albedo[2] * e[2]]
}

pub(crate) fn render_with_camera(
    model: &MorphableModel,
    params: &SceneParams,
    camera: &Camera,
    width: usize,
    height: usize,
) -> Result<(ImageBuffer, VisibilityBuffer, SceneGeometry)> {
    let geom = SceneGeometry::new(model, params, camera)?;
    let vis = rasterize(model, &geom, width, height);
    let mut img = ImageBuffer::new(width, height, 3)?;
    for y in 0..height {
        for x in 0..width {
            if let Some(t) = vis.triangle(x, y) {
                let s = geom.surface(model.triangles()[t as usize], vis.barycentrics(x, y));
                img.set_rgb(x, y, shade(&s, &params.light));
            }
        }
    }
    Ok((img, vis, geom))
}

/// SH-shaded Lambertian render of the model; uncovered pixels are black.
pub fn render_synth(model: &MorphableModel, params: &SceneParams, width: usize, height: usize) -> Result<(ImageBuffer, VisibilityBuffer)> {
    let (img, vis, _) = render_with_camera(model, params, &params.camera, width, height)?;
    Ok((img, vis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphable::model::{Basis, Coefficients};
    use crate::morphable::sh::constant_light;

    /// Flat triangles at the given camera-space positions, identity pose.
    fn flat_model(points: &[[f64; 3]], tris: Vec<[u32; 3]>, albedo: Vec<f64>) -> MorphableModel {
        let n = points.len();
        MorphableModel::new(
            tris,
            points.concat(),
            albedo,
            Basis::zeros(3 * n, 0),
            Basis::zeros(3 * n, 0),
            Basis::zeros(3 * n, 0),
            vec![],
            vec![],
            vec![],
            vec![[0.5, 0.5]; n],
        )
        .unwrap()
    }

    fn params(light: [f64; 27]) -> SceneParams {
        SceneParams {
            coeffs: Coefficients::default(),
            rotation: [1.0, 0.0, 0.0, 0.0],
            translation: [0.0; 3],
            camera: Camera { focal: 10.0, principal: [0.0, 0.0] },
            light,
        }
    }

    #[test]
    fn single_triangle_matches_manual_rasterization() {
        // projects to (0,0), (8,0), (0,8) and faces the camera
        let pts = [[0.0, 0.0, 1.0], [0.8, 0.0, 1.0], [0.0, 0.8, 1.0]];
        let albedo = vec![0.2, 0.4, 0.6, 0.8, 0.8, 0.8, 0.1, 0.1, 0.1];
        let model = flat_model(&pts, vec![[0, 2, 1]], albedo);
        let (img, vis) = render_synth(&model, &params(constant_light([0.5; 3])), 10, 10).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let inside = px + py <= 8.0;
                assert_eq!(vis.is_covered(x, y), inside, "pixel {x},{y}");
                if inside {
                    let b = [1.0 - px / 8.0 - py / 8.0, px / 8.0, py / 8.0];
                    let want = [
                        0.5 * (0.2 * b[0] + 0.8 * b[1] + 0.1 * b[2]),
                        0.5 * (0.4 * b[0] + 0.8 * b[1] + 0.1 * b[2]),
                        0.5 * (0.6 * b[0] + 0.8 * b[1] + 0.1 * b[2]),
                    ];
                    let got = img.rgb(x, y);
                    for c in 0..3 {
                        assert!((got[c] - want[c]).abs() < 1e-12);
                    }
                } else {
                    assert_eq!(img.rgb(x, y), [0.0; 3]);
                }
            }
        }
    }

    #[test]
    fn back_facing_triangle_is_culled() {
        let pts = [[0.0, 0.0, 1.0], [0.8, 0.0, 1.0], [0.0, 0.8, 1.0]];
        let model = flat_model(&pts, vec![[0, 1, 2]], vec![0.5; 9]);
        let (_, vis) = render_synth(&model, &params(constant_light([1.0; 3])), 10, 10).unwrap();
        assert_eq!(vis.coverage(), 0);
    }

    #[test]
    fn nearer_triangle_wins() {
        let far = [[-1.0, -1.0, 2.0], [3.0, -1.0, 2.0], [-1.0, 3.0, 2.0]];
        let near = [[-0.5, -0.5, 1.0], [1.5, -0.5, 1.0], [-0.5, 1.5, 1.0]];
        let pts: Vec<[f64; 3]> = near.iter().chain(&far).copied().collect();
        let mut albedo = vec![0.9; 9];
        albedo.extend(vec![0.1; 9]);
        for order in [vec![[3, 5, 4], [0, 2, 1]], vec![[0, 2, 1], [3, 5, 4]]] {
            let model = flat_model(&pts, order.clone(), albedo.clone());
            let (_, vis) = render_synth(&model, &params(constant_light([1.0; 3])), 10, 10).unwrap();
            let near_index = order.iter().position(|t| t[0] == 0).unwrap() as u32;
            for y in 0..10 {
                for x in 0..10 {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    if px >= -5.0 && py >= -5.0 && px + py <= 10.0 {
                        assert_eq!(vis.triangle(x, y), Some(near_index), "{x},{y}");
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_camera_rejected() {
        let pts = [[0.0, 0.0, 1.0], [0.8, 0.0, 1.0], [0.0, 0.8, 1.0]];
        let model = flat_model(&pts, vec![[0, 2, 1]], vec![0.5; 9]);
        let mut p = params(constant_light([1.0; 3]));
        p.camera.focal = 0.0;
        assert!(matches!(render_synth(&model, &p, 4, 4), Err(Error::DegenerateCamera(_))));
    }
}
