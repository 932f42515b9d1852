//! Coarse-to-fine fitting: a landmark-only pose solve at full resolution,
//! then joint Gauss-Newton/IRLS over all parameter groups on a decimation
//! pyramid.
//!
//! Level `s` keeps pixel `(s X, s Y)` of the input as pixel `(X, Y)` and
//! renders with [`Camera::decimated`], which sees exactly the same rays, so
//! a parameter set that reproduces the input does so at every level.

use std::fmt;

use super::energy::{ActiveParams, EnergyTerms, EnergyWeights, FitProblem};
use super::inputs::{Landmarks, SegmentationMask};
use super::model::MorphableModel;
use super::scene::{Camera, SceneParams};
use super::sh::constant_light;
use crate::error::{Error, Result};
use crate::numerics::{gauss_newton_irls, GaussNewtonOptions, ImageBuffer};

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub weights: EnergyWeights,
    /// `(decimation, Gauss-Newton steps)` from coarse to fine.
    pub schedule: Vec<(usize, usize)>,
    pub pose_steps: usize,
    pub active: ActiveParams,
    pub solver: GaussNewtonOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            weights: EnergyWeights::default(),
            schedule: vec![(4, 30), (2, 10), (1, 3)],
            pose_steps: 10,
            active: ActiveParams::all(),
            solver: GaussNewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub scale: usize,
    pub steps: usize,
    pub steps_taken: usize,
    pub accepted: usize,
    pub initial_energy: f64,
    pub energy: f64,
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub params: SceneParams,
    pub pose: LevelReport,
    pub levels: Vec<LevelReport>,
    /// Full-resolution energy of the result.
    pub terms: EnergyTerms,
}

impl FitReport {
    /// Gauss-Newton step budget per pyramid level, coarse to fine.
    pub fn schedule(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.steps).collect()
    }
}

#[derive(Debug)]
pub struct FitFailure {
    pub stage: String,
    pub error: Error,
    /// Best parameters reached before the failure.
    pub best: SceneParams,
    pub energy: f64,
}

impl fmt::Display for FitFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fit failed during {}: {} (best energy {:e})", self.stage, self.error, self.energy)
    }
}

impl std::error::Error for FitFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Keeps pixel `(s X, s Y)` as pixel `(X, Y)`.
pub fn decimate(image: &ImageBuffer, s: usize) -> Result<ImageBuffer> {
    let (w, h) = (image.width() / s, image.height() / s);
    ImageBuffer::from_fn(w, h, image.channels(), |c, x, y| image.get(c, s * x, s * y))
}

/// Generic starting point for a photograph: mean face, frontal pose, focal
/// length twice the larger image side, translation matching the landmarks'
/// centroid and spread, and flat light scaled to the mean masked intensity.
pub fn initial_params(model: &MorphableModel, image: &ImageBuffer, mask: &SegmentationMask, landmarks: &Landmarks) -> Result<SceneParams> {
    mask.matches(image)?;
    landmarks.validate(model)?;
    let (w, h) = (image.width(), image.height());
    let camera = Camera::centered(2.0 * w.max(h) as f64, w, h);
    let mean = model.mean_shape();
    let n = landmarks.len() as f64;
    let vert = |l: &super::inputs::Landmark, k: usize| mean[3 * l.vertex + k];
    let centroid = |f: &dyn Fn(&super::inputs::Landmark, usize) -> f64| [0, 1, 2].map(|k| landmarks.0.iter().map(|l| f(l, k)).sum::<f64>() / n);
    let model_c = centroid(&vert);
    let image_c = centroid(&|l, k| if k < 2 { l.point[k] } else { 0.0 });
    let spread = |f: &dyn Fn(&super::inputs::Landmark) -> [f64; 2], c: [f64; 3]| {
        (landmarks.0.iter().map(|l| (f(l)[0] - c[0]).powi(2) + (f(l)[1] - c[1]).powi(2)).sum::<f64>() / n).sqrt()
    };
    let r_model = spread(&|l| [vert(l, 0), vert(l, 1)], model_c);
    let r_image = spread(&|l| l.point, image_c);
    if !(r_model > 0.0 && r_image > 0.0) {
        return Err(Error::InvalidArgument("landmarks have no spatial extent".into()));
    }
    let depth = camera.focal * r_model / r_image;
    let translation = [
        (image_c[0] - camera.principal[0]) * depth / camera.focal - model_c[0],
        (image_c[1] - camera.principal[1]) * depth / camera.focal - model_c[1],
        depth - model_c[2],
    ];
    let mut level = [0.0; 3];
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                let c = image.rgb(x, y);
                (0..3).for_each(|k| level[k] += c[k]);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyOverlap("mask selects no pixels".into()));
    }
    let albedo = model.mean_albedo();
    let verts = model.vertex_count() as f64;
    let light_level = [0, 1, 2].map(|k| {
        let a = albedo.iter().skip(k).step_by(3).sum::<f64>() / verts;
        (level[k] / count as f64 / a.max(1e-3)).max(1e-3)
    });
    Ok(SceneParams {
        coeffs: model.zero_coefficients(),
        rotation: [1.0, 0.0, 0.0, 0.0],
        translation,
        camera,
        light: constant_light(light_level),
    })
}

pub fn fit_model(
    image: &ImageBuffer,
    landmarks: &Landmarks,
    mask: &SegmentationMask,
    model: &MorphableModel,
    init: &SceneParams,
    opts: &FitOptions,
) -> std::result::Result<FitReport, FitFailure> {
    let fail = |stage: &str, error: Error, best: &SceneParams, energy: f64| FitFailure {
        stage: stage.to_string(),
        error,
        best: best.clone(),
        energy,
    };
    if landmarks.is_empty() {
        return Err(fail("setup", Error::InvalidArgument("no landmarks".into()), init, f64::INFINITY));
    }
    init.validate(model).map_err(|e| fail("setup", e, init, f64::INFINITY))?;
    mask.matches(image).map_err(|e| fail("setup", e, init, f64::INFINITY))?;

    let mut params = init.clone();
    // the principal point is held at the image center
    params.camera = Camera::centered(params.camera.focal, image.width(), image.height());

    let pose_weights = EnergyWeights { photometric: 0.0, landmark: opts.weights.landmark.max(1.0), regularization: 0.0 };
    let pose_active = ActiveParams {
        id: false,
        exp: false,
        albedo: false,
        light: false,
        rotation: opts.active.rotation,
        translation: opts.active.translation,
        focal: opts.active.focal,
    };
    let problem = FitProblem::new(model, image, mask, landmarks, pose_weights, pose_active, 1)
        .map_err(|e| fail("pose initialization", e, &params, f64::INFINITY))?;
    let solver = GaussNewtonOptions { steps: opts.pose_steps, ..opts.solver };
    let pose = match gauss_newton_irls(&problem, &params, &solver) {
        Ok(r) => {
            params = r.state;
            LevelReport {
                scale: 1,
                steps: opts.pose_steps,
                steps_taken: r.steps,
                accepted: r.accepted,
                initial_energy: r.initial_energy,
                energy: r.energy,
                energies: r.energies,
            }
        }
        Err(f) => return Err(fail("pose initialization", f.error, &f.best, f.energy)),
    };

    let mut levels = Vec::with_capacity(opts.schedule.len());
    for &(scale, steps) in &opts.schedule {
        let stage = format!("pyramid level 1/{scale}");
        let (level_image, level_mask) = if scale == 1 {
            (image.clone(), mask.clone())
        } else {
            (decimate(image, scale).map_err(|e| fail(&stage, e, &params, f64::INFINITY))?, mask.decimate(scale))
        };
        let problem = FitProblem::new(model, &level_image, &level_mask, landmarks, opts.weights, opts.active, scale)
            .map_err(|e| fail(&stage, e, &params, f64::INFINITY))?;
        let solver = GaussNewtonOptions { steps, ..opts.solver };
        match gauss_newton_irls(&problem, &params, &solver) {
            Ok(r) => {
                params = r.state;
                levels.push(LevelReport {
                    scale,
                    steps,
                    steps_taken: r.steps,
                    accepted: r.accepted,
                    initial_energy: r.initial_energy,
                    energy: r.energy,
                    energies: r.energies,
                });
            }
            Err(f) => return Err(fail(&stage, f.error, &f.best, f.energy)),
        }
    }

    let full = FitProblem::new(model, image, mask, landmarks, opts.weights, opts.active, 1)
        .map_err(|e| fail("final evaluation", e, &params, f64::INFINITY))?;
    let terms = full.terms(&params).map_err(|e| fail("final evaluation", e, &params, f64::INFINITY))?;
    Ok(FitReport { params, pose, levels, terms })
}
