//! Browser bindings for three interactive demos: the toy face under
//! adjustable spherical-harmonics light, stepwise Gram-matching synthesis,
//! and Euclidean projection onto the probability simplex.

use texface::analysis::toy::detail_texture;
use texface::analysis::{self_targets, TargetSet};
use texface::morphable::scene::{normalize_quaternion, quaternion_exp};
use texface::morphable::sh::{constant_light, SH_COEFFS};
use texface::morphable::toy::{toy_model, toy_scene};
use texface::morphable::{bake_lowfreq_texture, render_textured, MorphableModel, SceneParams};
use texface::net::toy::toy_network;
use texface::net::{LayerSelection, NetworkSpec};
use texface::numerics::simplex::project_to_simplex;
use texface::numerics::ImageBuffer;
use texface::synthesis::{synthesize, SynthesisConfig};
use wasm_bindgen::prelude::*;

/// Interleaved 8-bit RGBA of an RGB or gray image, opaque.
pub fn to_rgba(img: &ImageBuffer) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.pixels() * 4);
    for y in 0..img.height() {
        for x in 0..img.width() {
            for c in 0..3 {
                let v = img.get(c.min(img.channels() - 1), x, y);
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
            out.push(255);
        }
    }
    out
}

/// Ambient level plus a directional band-1 term toward `(x, y)` on the
/// viewer's hemisphere.
pub fn directional_light(ambient: f64, strength: f64, x: f64, y: f64) -> [f64; 27] {
    let r = x.hypot(y);
    let (x, y) = if r > 1.0 { (x / r, y / r) } else { (x, y) };
    let z = -(1.0 - x * x - y * y).max(0.0).sqrt();
    let mut l = constant_light([ambient; 3]);
    // band-1 basis is C1 * (y, z, x); C1 = sqrt(3 / (4 pi))
    let k = strength / 0.488_602_511_902_919_9;
    for c in 0..3 {
        l[c * SH_COEFFS + 1] = k * y;
        l[c * SH_COEFFS + 2] = k * z;
        l[c * SH_COEFFS + 3] = k * x;
    }
    l
}

#[wasm_bindgen]
pub struct FaceViewer {
    model: MorphableModel,
    params: SceneParams,
    albedo: ImageBuffer,
    size: usize,
}

#[wasm_bindgen]
impl FaceViewer {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize) -> FaceViewer {
        let size = size.clamp(32, 512);
        let model = toy_model();
        let params = toy_scene(&model, size, size);
        let base = bake_lowfreq_texture(&model, &params.coeffs.albedo, 128).expect("toy model bakes");
        let detail = detail_texture(3, 128);
        let mut albedo = base.clone();
        for c in 0..3 {
            let mean = detail.plane(c).iter().sum::<f64>() / detail.pixels() as f64;
            for (a, d) in albedo.plane_mut(c).iter_mut().zip(detail.plane(c)) {
                *a *= d / mean;
            }
        }
        FaceViewer { model, params, albedo: albedo.clamped(), size }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn set_light(&mut self, ambient: f64, strength: f64, x: f64, y: f64) {
        self.params.light = directional_light(ambient, strength, x, y);
    }

    /// Head rotation in radians about the vertical and horizontal axes.
    pub fn set_pose(&mut self, yaw: f64, pitch: f64) {
        self.params.rotation = normalize_quaternion(quaternion_exp([pitch, yaw, 0.0]));
    }

    pub fn render(&self) -> Vec<u8> {
        match render_textured(&self.model, &self.params, &self.albedo, self.size, self.size) {
            Ok(img) => to_rgba(&img),
            Err(_) => vec![0; self.size * self.size * 4],
        }
    }
}

/// Gram statistics from a sharp detail texture, content from its blurred
/// copy; each `step` continues L-BFGS from the current image.
#[wasm_bindgen]
pub struct SynthesisDemo {
    net: NetworkSpec,
    targets: TargetSet,
    target: ImageBuffer,
    current: ImageBuffer,
    losses: Vec<f64>,
    config: SynthesisConfig,
}

#[wasm_bindgen]
impl SynthesisDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: usize, blur: f64) -> SynthesisDemo {
        let size = size.clamp(32, 256);
        let net = toy_network();
        let selection = LayerSelection::vgg_default();
        let target = detail_texture(seed as u64, size);
        let current = target.gaussian_blur(blur.max(0.0));
        let grams = self_targets(&target, &net, &selection).expect("toy network accepts the texture").grams;
        let features = self_targets(&current, &net, &selection).expect("toy network accepts the texture").features;
        let targets = TargetSet { grams, features, weights: vec![1.0] };
        let config = SynthesisConfig { selection, ..SynthesisConfig::default() };
        SynthesisDemo { net, targets, target, current, losses: Vec::new(), config }
    }

    pub fn size(&self) -> usize {
        self.current.width()
    }

    /// Runs up to `iterations` more iterations and returns the loss.
    pub fn step(&mut self, iterations: usize) -> f64 {
        let cfg = SynthesisConfig { max_iterations: iterations.max(1), ..self.config.clone() };
        match synthesize(&self.current, &self.targets, &self.net, &cfg) {
            Ok(r) => {
                if self.losses.is_empty() {
                    self.losses.extend(r.trace.first().map(|t| t.total));
                }
                self.losses.extend(r.trace.iter().skip(1).map(|t| t.total));
                self.current = r.texture;
                self.losses.last().copied().unwrap_or(f64::NAN)
            }
            Err(_) => f64::NAN,
        }
    }

    pub fn losses(&self) -> Vec<f64> {
        self.losses.clone()
    }

    pub fn image(&self) -> Vec<u8> {
        to_rgba(&self.current)
    }

    pub fn target(&self) -> Vec<u8> {
        to_rgba(&self.target)
    }
}

/// Euclidean projection onto `{w >= 0, sum w = 1}`; empty for empty or
/// non-finite input.
#[wasm_bindgen]
pub fn project_simplex(values: &[f64]) -> Vec<f64> {
    project_to_simplex(values).map(|w| w.into_vec()).unwrap_or_default()
}
