//! Texture database construction: specular removal in SUV space, a fit of
//! all subjects under one shared light, full-coverage texture baking, and
//! persisted correlation stacks.

use std::path::Path;

use crate::analysis::{persisted_texture_path, CorrelationDatabase};
use crate::error::{Error, Result};
use crate::imageio::{quantize, save_image, BitDepth};
use crate::morphable::energy::{EnergyWeights, FitProblem};
use crate::morphable::{
    bake_lowfreq_texture, extract_partial_albedo, fit_model, initial_params, ActiveParams, FitOptions, Landmarks, MorphableModel,
    SceneParams, SegmentationMask, SH_LIGHT_LEN,
};
use crate::net::{LayerSelection, NetworkSpec};
use crate::numerics::color::apply3;
use crate::numerics::{gauss_newton_irls, GaussNewtonOptions, ImageBuffer, LeastSquaresProblem, ResidualBlock};

pub const DEFAULT_PERCENTILE: f64 = 95.0;

/// Rows `S, U, V`: `S` along the light color, `U` and `V` completing a
/// right-handed orthonormal basis.
pub fn suv_basis(light: [f64; 3]) -> Result<[[f64; 3]; 3]> {
    let n = (light[0] * light[0] + light[1] * light[1] + light[2] * light[2]).sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidArgument(format!("light color {light:?} must be nonzero")));
    }
    let s = light.map(|v| v / n);
    let axis = (0..3).min_by(|&a, &b| s[a].abs().total_cmp(&s[b].abs())).expect("three axes");
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let d = e[0] * s[0] + e[1] * s[1] + e[2] * s[2];
    let u = [e[0] - d * s[0], e[1] - d * s[1], e[2] - d * s[2]];
    let un = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let u = u.map(|v| v / un);
    let v = [s[1] * u[2] - s[2] * u[1], s[2] * u[0] - s[0] * u[2], s[0] * u[1] - s[1] * u[0]];
    Ok([s, u, v])
}

/// Nearest-rank percentile of `values` (`0 < p <= 100`).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Clamps the `S` coordinate of every pixel to its `percentile`-th
/// percentile over the image; `U` and `V` are kept.
pub fn remove_specular_suv(image: &ImageBuffer, light: [f64; 3], percentile_p: f64) -> Result<ImageBuffer> {
    if image.channels() != 3 {
        return Err(Error::InvalidArgument("specular removal needs an RGB image".into()));
    }
    if !(percentile_p > 0.0 && percentile_p <= 100.0) {
        return Err(Error::InvalidArgument(format!("percentile {percentile_p} outside (0, 100]")));
    }
    let rot = suv_basis(light)?;
    let inv = [[rot[0][0], rot[1][0], rot[2][0]], [rot[0][1], rot[1][1], rot[2][1]], [rot[0][2], rot[1][2], rot[2][2]]];
    let (w, h) = (image.width(), image.height());
    let suv: Vec<[f64; 3]> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| apply3(&rot, image.rgb(x, y))).collect();
    let s_values: Vec<f64> = suv.iter().map(|p| p[0]).collect();
    let limit = percentile(&s_values, percentile_p);
    let mut out = image.clone();
    for (i, p) in suv.iter().enumerate() {
        if p[0] > limit {
            out.set_rgb(i % w, i / w, apply3(&inv, [limit, p[1], p[2]]));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Subject {
    pub id: String,
    pub image: ImageBuffer,
    pub landmarks: Landmarks,
    pub mask: SegmentationMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatabaseOptions {
    pub rounds: usize,
    /// Options of the initial per-subject fit.
    pub fit: FitOptions,
    /// Full-resolution Gauss-Newton steps per subject in each round.
    pub refine_steps: usize,
    /// Gauss-Newton steps of the shared-light solve in each round.
    pub light_steps: usize,
    pub texture_size: usize,
    pub light_color: [f64; 3],
    pub percentile: f64,
}

impl Default for DatabaseOptions {
    fn default() -> Self {
        Self {
            rounds: 5,
            fit: FitOptions::default(),
            refine_steps: 3,
            light_steps: 5,
            texture_size: crate::morphable::texture::DEFAULT_TEXTURE_SIZE,
            light_color: [1.0; 3],
            percentile: DEFAULT_PERCENTILE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatabaseTexture {
    pub id: String,
    pub texture: ImageBuffer,
    pub params: SceneParams,
}

#[derive(Debug, Clone)]
pub struct DatabaseBuild {
    /// Sorted by id.
    pub textures: Vec<DatabaseTexture>,
    pub light: [f64; SH_LIGHT_LEN],
    /// `(id, reason)` of subjects whose fit failed.
    pub skipped: Vec<(String, String)>,
    /// Summed energy over the kept subjects after each round.
    pub round_energies: Vec<f64>,
}

/// All subjects' light-only problems with one light vector.
struct SharedLight<'a> {
    problems: Vec<FitProblem<'a>>,
}

impl LeastSquaresProblem for SharedLight<'_> {
    type State = Vec<SceneParams>;

    fn tangent_dim(&self) -> usize {
        SH_LIGHT_LEN
    }

    fn residuals(&self, state: &Vec<SceneParams>, with_jacobian: bool) -> Result<Vec<ResidualBlock>> {
        let mut blocks = Vec::new();
        for (p, s) in self.problems.iter().zip(state) {
            blocks.extend(p.residuals(s, with_jacobian)?);
        }
        Ok(blocks)
    }

    fn retract(&self, state: &Vec<SceneParams>, delta: &[f64]) -> Vec<SceneParams> {
        self.problems.iter().zip(state).map(|(p, s)| p.retract(s, delta)).collect()
    }
}

fn summed_energy(problems: &[FitProblem<'_>], params: &[SceneParams]) -> Result<f64> {
    problems.iter().zip(params).map(|(p, s)| p.terms(s).map(|t| t.total)).sum()
}

/// Fits every subject under one shared light by alternation and bakes
/// full-coverage textures. Subjects are processed in id order, so the result
/// does not depend on their input order.
pub fn build_texture_database(subjects: &[Subject], model: &MorphableModel, opts: &DatabaseOptions) -> Result<DatabaseBuild> {
    if subjects.is_empty() {
        return Err(Error::InvalidArgument("texture database needs at least one subject".into()));
    }
    let mut order: Vec<&Subject> = subjects.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = order.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::InvalidArgument(format!("duplicate subject id {}", w[0].id)));
    }
    let images = order
        .iter()
        .map(|s| remove_specular_suv(&s.image, opts.light_color, opts.percentile))
        .collect::<Result<Vec<_>>>()?;

    let mut skipped = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    let mut params: Vec<SceneParams> = Vec::new();
    for (i, s) in order.iter().enumerate() {
        let fitted = initial_params(model, &images[i], &s.mask, &s.landmarks)
            .map_err(|e| e.to_string())
            .and_then(|init| fit_model(&images[i], &s.landmarks, &s.mask, model, &init, &opts.fit).map_err(|e| e.to_string()));
        match fitted {
            Ok(report) if report.terms.total.is_finite() => {
                kept.push(i);
                params.push(report.params);
            }
            Ok(report) => skipped.push((s.id.clone(), format!("non-finite energy {}", report.terms.total))),
            Err(e) => skipped.push((s.id.clone(), e)),
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidArgument(format!("every subject failed to fit: {skipped:?}")));
    }
    let mut light = [0.0; SH_LIGHT_LEN];
    for p in &params {
        light.iter_mut().zip(&p.light).for_each(|(l, v)| *l += v / params.len() as f64);
    }
    params.iter_mut().for_each(|p| p.light = light);

    let refine_active = ActiveParams { light: false, ..opts.fit.active };
    let refine = FitOptions { schedule: vec![(1, opts.refine_steps)], pose_steps: 0, active: refine_active, ..opts.fit.clone() };
    let weights: EnergyWeights = opts.fit.weights;
    let mut round_energies = Vec::with_capacity(opts.rounds);
    for _ in 0..opts.rounds {
        for (slot, &i) in kept.iter().enumerate() {
            let s = order[i];
            if let Ok(r) = fit_model(&images[i], &s.landmarks, &s.mask, model, &params[slot], &refine) {
                params[slot] = r.params;
            }
        }
        let problems = kept
            .iter()
            .map(|&i| FitProblem::new(model, &images[i], &order[i].mask, &order[i].landmarks, weights, ActiveParams::light_only(), 1))
            .collect::<Result<Vec<_>>>()?;
        let shared = SharedLight { problems };
        match gauss_newton_irls(&shared, &params, &GaussNewtonOptions { steps: opts.light_steps, ..opts.fit.solver }) {
            Ok(r) => params = r.state,
            Err(f) => params = f.best,
        }
        light = params[0].light;
        let full = kept
            .iter()
            .map(|&i| FitProblem::new(model, &images[i], &order[i].mask, &order[i].landmarks, weights, ActiveParams::all(), 1))
            .collect::<Result<Vec<_>>>()?;
        round_energies.push(summed_energy(&full, &params)?);
    }

    let mut textures = Vec::with_capacity(kept.len());
    for (slot, &i) in kept.iter().enumerate() {
        let p = &params[slot];
        let partial = extract_partial_albedo(&images[i], p, &order[i].mask, model, opts.texture_size)?;
        let fill = bake_lowfreq_texture(model, &p.coeffs.albedo, opts.texture_size)?;
        textures.push(DatabaseTexture { id: order[i].id.clone(), texture: partial.filled_from(&fill)?, params: p.clone() });
    }
    Ok(DatabaseBuild { textures, light, skipped, round_energies })
}

/// Writes each texture as a 16-bit PNG beside `path` and the correlation
/// stacks of those stored textures as a `GRDB` file at `path`.
pub fn persist_correlations(
    textures: &[(String, ImageBuffer)],
    net: &NetworkSpec,
    selection: &LayerSelection,
    path: &Path,
) -> Result<CorrelationDatabase> {
    let stored: Vec<(String, ImageBuffer)> = textures.iter().map(|(id, t)| (id.clone(), quantize(t, BitDepth::Sixteen))).collect();
    let db = CorrelationDatabase::build(net, &stored, selection)?;
    for (id, t) in &stored {
        save_image(t, &persisted_texture_path(path, id), BitDepth::Sixteen)?;
    }
    db.save(path)?;
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diffuse(w: usize, h: usize) -> ImageBuffer {
        // the brightest tenth of the image is a flat plateau
        ImageBuffer::from_fn(w, h, 3, |c, x, y| {
            let shade = if y < h / 10 { 0.8 } else { 0.3 + 0.5 * (x + w * y) as f64 / (w * h) as f64 };
            shade * [0.9, 0.6, 0.5][c]
        })
        .unwrap()
    }

    fn suv(img: &ImageBuffer, x: usize, y: usize) -> [f64; 3] {
        apply3(&suv_basis([1.0; 3]).unwrap(), img.rgb(x, y))
    }

    #[test]
    fn basis_is_orthonormal() {
        let r = suv_basis([0.9, 1.0, 0.7]).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let d: f64 = (0..3).map(|k| r[a][k] * r[b][k]).sum();
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(suv_basis([0.0; 3]).is_err());
    }

    #[test]
    fn diffuse_image_unchanged() {
        let img = diffuse(40, 30);
        let out = remove_specular_suv(&img, [1.0; 3], 95.0).unwrap();
        assert!(out.data().iter().zip(img.data()).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn specular_spikes_suppressed() {
        let img = diffuse(40, 30);
        let spikes = [(5, 1), (17, 2), (30, 0), (33, 1)];
        let mut lit = img.clone();
        for &(x, y) in &spikes {
            let c = lit.rgb(x, y);
            lit.set_rgb(x, y, c.map(|v| v + 0.5));
        }
        let out = remove_specular_suv(&lit, [1.0; 3], 95.0).unwrap();
        for y in 0..30 {
            for x in 0..40 {
                let (o, d) = (out.rgb(x, y), img.rgb(x, y));
                let change = (0..3).map(|k| (o[k] - d[k]).abs()).fold(0.0, f64::max);
                if spikes.contains(&(x, y)) {
                    let before = (0..3).map(|k| lit.rgb(x, y)[k] - d[k]).fold(0.0, f64::max);
                    assert!(change <= 0.1 * before, "spike {x},{y}: {change}");
                } else {
                    assert!(change < 1e-3);
                }
                let (a, b) = (suv(&out, x, y), suv(&lit, x, y));
                assert!((a[1] - b[1]).abs() < 1e-12 && (a[2] - b[2]).abs() < 1e-12);
            }
        }
        let twice = remove_specular_suv(&out, [1.0; 3], 95.0).unwrap();
        assert!(twice.data().iter().zip(out.data()).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 95.0), 19.0);
        assert_eq!(percentile(&v, 100.0), 20.0);
        assert_eq!(percentile(&v, 1.0), 1.0);
    }

    use crate::morphable::raster::render_synth;
    use crate::morphable::scene::{normalize_quaternion, quaternion_exp};
    use crate::morphable::toy::{toy_landmarks, toy_light, toy_model, toy_scene};

    fn subjects(model: &MorphableModel, n: usize) -> (Vec<Subject>, Vec<SceneParams>) {
        let mut out = Vec::new();
        let mut truths = Vec::new();
        for k in 0..2 {
            let mut p = toy_scene(model, n, n);
            let sign = if k == 0 { 1.0 } else { -0.6 };
            p.coeffs.id.iter_mut().for_each(|v| *v *= sign);
            p.coeffs.albedo.iter_mut().for_each(|v| *v *= sign);
            p.rotation = normalize_quaternion(quaternion_exp([0.03 * k as f64, -0.15 + 0.3 * k as f64, 0.0]));
            let (image, _) = render_synth(model, &p, n, n).unwrap();
            out.push(Subject { id: format!("subject-{k}"), image, landmarks: toy_landmarks(model, &p), mask: SegmentationMask::full(n, n) });
            truths.push(p);
        }
        (out, truths)
    }

    fn quick_options() -> DatabaseOptions {
        DatabaseOptions { rounds: 3, texture_size: 64, percentile: 100.0, ..Default::default() }
    }

    #[test]
    fn shared_light_recovered() {
        let model = toy_model();
        let (subs, _) = subjects(&model, 128);
        let build = build_texture_database(&subs, &model, &quick_options()).unwrap();
        assert!(build.skipped.is_empty(), "{:?}", build.skipped);
        let truth = toy_light();
        let norm = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = build.light.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err / norm < 1e-2, "relative light error {}", err / norm);
        let e = &build.round_energies;
        assert!(e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{e:?}");
        for t in &build.textures {
            assert_eq!((t.texture.width(), t.texture.height()), (64, 64));
            assert!(t.texture.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
            assert_eq!(t.params.light, build.light);
        }
        let mut reversed = subs.clone();
        reversed.reverse();
        let again = build_texture_database(&reversed, &model, &quick_options()).unwrap();
        assert_eq!(again.light, build.light);
        for (a, b) in again.textures.iter().zip(&build.textures) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.texture, b.texture);
        }
    }

    #[test]
    fn unfit_subjects_are_skipped() {
        let model = toy_model();
        let (mut subs, _) = subjects(&model, 64);
        subs[1].landmarks = Landmarks(vec![]);
        let build = build_texture_database(&subs, &model, &DatabaseOptions { rounds: 1, ..quick_options() }).unwrap();
        assert_eq!(build.textures.len(), 1);
        assert_eq!(build.skipped[0].0, "subject-1");
        subs[0].landmarks = Landmarks(vec![]);
        assert!(build_texture_database(&subs, &model, &quick_options()).is_err());
        subs[1].id = subs[0].id.clone();
        assert!(build_texture_database(&subs, &model, &quick_options()).is_err());
    }
}
