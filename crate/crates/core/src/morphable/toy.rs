//! Procedural face-like model with the file schema of a full morphable
//! model, used by tests, fixtures, and the demo.
//!
//! The surface is a `22 x 22` grid on an ellipsoidal cap with a nose bump.
//! Model space has `+y` pointing down and the face looking toward `-z`, so
//! a camera at the origin sees it when it is translated to positive depth.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::inputs::{Landmark, Landmarks};
use super::model::{Basis, Coefficients, MorphableModel};
use super::scene::{normalize_quaternion, project_points, quaternion_exp, Camera, SceneParams};
use super::sh::{constant_light, SH_COEFFS, SH_LIGHT_LEN};

pub const GRID: usize = 22;
const SEED: u64 = 0x7e57_face;

fn grid_coords(i: usize, j: usize) -> (f64, f64) {
    let step = 2.0 / (GRID - 1) as f64;
    (i as f64 * step - 1.0, j as f64 * step - 1.0)
}

fn surface(s: f64, t: f64) -> [f64; 3] {
    let (a, b, c) = (0.75, 0.95, 0.6);
    let rho = (0.8 * (s * s + t * t)).min(1.0);
    let nose = 0.22 * (-(s * s + (t - 0.05) * (t - 0.05)) / (2.0 * 0.12 * 0.12)).exp();
    [a * s, b * t, -c * (1.0 - rho).sqrt() - nose]
}

/// Smooth fields on the grid used to build bases: low-order cosine products.
fn smooth_field(p: usize, q: usize, s: f64, t: f64) -> f64 {
    (p as f64 * PI * (s + 1.0) / 2.0).cos() * (q as f64 * PI * (t + 1.0) / 2.0).cos()
}

fn random_basis(rng: &mut ChaCha8Rng, cols: usize, rows_per_vertex: usize, amplitude: f64) -> Basis {
    let modes: Vec<(usize, usize)> = (0..3).flat_map(|p| (0..3).map(move |q| (p, q))).filter(|m| *m != (0, 0)).collect();
    let n = GRID * GRID;
    let mut data = vec![0.0; 3 * n * cols];
    for j in 0..cols {
        let weights: Vec<[f64; 3]> =
            modes.iter().map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let mut col = vec![0.0; 3 * n];
        for jj in 0..GRID {
            for ii in 0..GRID {
                let (s, t) = grid_coords(ii, jj);
                let v = jj * GRID + ii;
                for k in 0..rows_per_vertex.min(3) {
                    col[3 * v + k] = modes.iter().zip(&weights).map(|(&(p, q), w)| w[k] * smooth_field(p, q, s, t)).sum();
                }
            }
        }
        let peak = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (r, v) in col.iter().enumerate() {
            data[r * cols + j] = amplitude * v / peak;
        }
    }
    Basis::new(3 * n, cols, data).expect("toy basis dims")
}

pub fn toy_model() -> MorphableModel {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let n = GRID * GRID;
    let mut shape = Vec::with_capacity(3 * n);
    let mut albedo = Vec::with_capacity(3 * n);
    let mut uv = Vec::with_capacity(n);
    for j in 0..GRID {
        for i in 0..GRID {
            let (s, t) = grid_coords(i, j);
            shape.extend_from_slice(&surface(s, t));
            let blob = |cs: f64, ct: f64, rs: f64, rt: f64| (-((s - cs) / rs).powi(2) - ((t - ct) / rt).powi(2)).exp();
            let cheek = blob(0.5, 0.2, 0.3, 0.3) + blob(-0.5, 0.2, 0.3, 0.3);
            let brow = blob(0.35, -0.44, 0.28, 0.16) + blob(-0.35, -0.44, 0.28, 0.16);
            let eye = blob(0.33, -0.2, 0.2, 0.16) + blob(-0.33, -0.2, 0.2, 0.16);
            let lips = blob(0.0, 0.58, 0.32, 0.17);
            albedo.extend_from_slice(&[
                0.74 + 0.06 * cheek - 0.2 * brow - 0.2 * eye + 0.05 * lips,
                0.55 - 0.02 * cheek - 0.17 * brow - 0.15 * eye - 0.12 * lips,
                0.46 - 0.02 * cheek - 0.14 * brow - 0.12 * eye - 0.08 * lips,
            ]);
            uv.push([(i as f64 + 0.5) / GRID as f64, (j as f64 + 0.5) / GRID as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * (GRID - 1) * (GRID - 1));
    let v = |i: usize, j: usize| (j * GRID + i) as u32;
    for j in 0..GRID - 1 {
        for i in 0..GRID - 1 {
            let (s0, t0) = grid_coords(i, j);
            let (s1, t1) = grid_coords(i + 1, j + 1);
            let (s, t) = ((s0 + s1) / 2.0, (t0 + t1) / 2.0);
            // an oval outline instead of the square grid
            if s * s + t * t > 1.0 {
                continue;
            }
            triangles.push([v(i, j), v(i, j + 1), v(i + 1, j)]);
            triangles.push([v(i + 1, j), v(i, j + 1), v(i + 1, j + 1)]);
        }
    }
    let id = random_basis(&mut rng, 8, 3, 1.0);
    let exp = random_basis(&mut rng, 4, 3, 1.0);
    let al = random_basis(&mut rng, 8, 3, 1.0);
    MorphableModel::new(
        triangles,
        shape,
        albedo,
        id,
        exp,
        al,
        vec![0.06, 0.05, 0.045, 0.04, 0.035, 0.03, 0.025, 0.02],
        vec![0.04, 0.03, 0.025, 0.02],
        vec![0.05, 0.045, 0.04, 0.035, 0.03, 0.025, 0.02, 0.015],
        uv,
    )
    .expect("toy model is well formed")
}

/// Frontal light from the upper left with a slightly warm tint.
pub fn toy_light() -> [f64; SH_LIGHT_LEN] {
    let base = [0.15, -0.45, 0.25, 0.03, 0.04, -0.06, 0.03, 0.04];
    let tint = [1.02, 1.0, 0.97];
    let mut l = constant_light(tint.map(|t| 0.7 * t));
    for c in 0..3 {
        for (b, v) in base.iter().enumerate() {
            l[c * SH_COEFFS + 1 + b] = v * tint[c];
        }
    }
    l
}

/// Reference scene at `width x height`: moderate coefficients, a slight
/// three-quarter pose, and the toy light.
pub fn toy_scene(model: &MorphableModel, width: usize, height: usize) -> SceneParams {
    let (d_id, d_exp, d_al) = model.dims();
    let pattern = |d: usize, sigma: &[f64], phase: f64| -> Vec<f64> {
        (0..d).map(|j| sigma[j] * 0.8 * ((j as f64 + 1.0) * 1.7 + phase).sin()).collect()
    };
    SceneParams {
        coeffs: Coefficients {
            id: pattern(d_id, model.sigma_id(), 0.3),
            exp: pattern(d_exp, model.sigma_exp(), 1.1),
            albedo: pattern(d_al, model.sigma_albedo(), 2.0),
        },
        rotation: normalize_quaternion(quaternion_exp([-0.05, 0.18, 0.02])),
        translation: [0.03, -0.02, 5.0],
        camera: Camera::centered(500.0 * width.min(height) as f64 / 256.0, width, height),
        light: toy_light(),
    }
}

/// A generic starting point: mean face, frontal pose, offset translation,
/// focal off by a few percent, and flat light.
pub fn toy_init(model: &MorphableModel, width: usize, height: usize) -> SceneParams {
    let light = constant_light([0.8; 3]);
    SceneParams {
        coeffs: model.zero_coefficients(),
        rotation: [1.0, 0.0, 0.0, 0.0],
        translation: [-0.05, 0.04, 5.3],
        camera: Camera::centered(475.0 * width.min(height) as f64 / 256.0, width, height),
        light,
    }
}

/// Interior grid vertices on a regular lattice.
pub fn toy_landmark_vertices() -> Vec<usize> {
    (2..GRID - 1).step_by(3).flat_map(|j| (2..GRID - 1).step_by(3).map(move |i| j * GRID + i)).collect()
}

/// Exact projections of the landmark vertices under `params`.
pub fn toy_landmarks(model: &MorphableModel, params: &SceneParams) -> Landmarks {
    let verts = model.shape(&params.coeffs.id, &params.coeffs.exp).expect("scene matches model");
    let proj = project_points(&params.camera, &params.rotation_matrix(), params.translation, &verts);
    Landmarks(
        toy_landmark_vertices()
            .into_iter()
            .filter_map(|v| proj[v].map(|point| Landmark { vertex: v, point }))
            .collect(),
    )
}
