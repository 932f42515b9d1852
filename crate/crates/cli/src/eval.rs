//! Evaluation sweeps: Gram-layer count and input resolution.

use std::fmt::Write as _;
use std::fs;

use texface::imageio::{load_partial, load_rgb, save_image, BitDepth};
use texface::morphable::{Landmark, Landmarks, SegmentationMask};
use texface::numerics::ImageBuffer;
use texface::synthesis::{laplacian_variance, SynthesisConfig};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::stages::{
    blend_partial, ensure_out, extract_textures, fit_photo, load_database, load_model_file, load_network, load_photo, run_extract, run_fit,
    synthesize_texture, LOWFREQ, PARTIAL,
};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRow {
    pub gram_layers: usize,
    pub final_loss: f64,
    pub initial_loss: f64,
    pub laplacian_variance: f64,
    pub iterations: usize,
}

/// Runs fit and extract when their artifacts are missing.
fn ensure_textures(stage: &'static str, cfg: &PipelineConfig) -> CliResult<()> {
    if !cfg.artifact(PARTIAL).is_file() || !cfg.artifact(LOWFREQ).is_file() {
        run_fit(cfg)?;
        run_extract(cfg)?;
    }
    ensure_out(stage, cfg)
}

/// Analysis and synthesis with the first `n` Gram layers for each `n` in
/// `layer_counts`. Writes `eval_layers.csv` and `eval_layers/final_<n>.png`.
pub fn eval_layers(cfg: &PipelineConfig) -> CliResult<Vec<LayerRow>> {
    let net = load_network("eval layers", cfg)?;
    ensure_textures("eval layers", cfg)?;
    let partial = load_partial(&cfg.artifact(PARTIAL)).map_err(|e| CliError::input("eval layers", e))?;
    let lowfreq = load_rgb(&cfg.artifact(LOWFREQ)).map_err(|e| CliError::input("eval layers", e))?;
    let dir = cfg.artifact("eval_layers");
    fs::create_dir_all(&dir).map_err(|e| CliError::stage("eval layers", format!("{}: {e}", dir.display())))?;
    let mut rows = Vec::new();
    for &n in &cfg.layer_counts {
        if n > cfg.selection.gram_layers.len() {
            return Err(CliError::input("eval layers", format!("{n} Gram layers requested, {} configured", cfg.selection.gram_layers.len())));
        }
        let selection = cfg.selection.with_gram_count(n);
        let (db, textures) = load_database("eval layers", cfg, &selection)?;
        let fit = blend_partial(&partial, &db, &textures, &net, cfg.blend, &cfg.blend_options)?;
        let synthesis = SynthesisConfig { selection, ..cfg.synthesis.clone() };
        let result = synthesize_texture(&lowfreq, &fit.weights, &db, &net, &synthesis)?;
        save_image(&result.texture, &dir.join(format!("final_{n}.png")), BitDepth::Sixteen).map_err(|e| CliError::stage("eval layers", e))?;
        rows.push(LayerRow {
            gram_layers: n,
            final_loss: result.final_loss(),
            initial_loss: result.trace.first().map_or(f64::NAN, |r| r.total),
            laplacian_variance: laplacian_variance(&result.texture).map_err(|e| CliError::stage("eval layers", e))?,
            iterations: result.iterations,
        });
    }
    let mut csv = String::from("gram_layers,initial_loss,final_loss,laplacian_variance,iterations\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{:?},{:?},{:?},{}", r.gram_layers, r.initial_loss, r.final_loss, r.laplacian_variance, r.iterations);
    }
    fs::write(cfg.artifact("eval_layers.csv"), csv).map_err(|e| CliError::stage("eval layers", e))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowresRow {
    pub factor: usize,
    pub width: usize,
    pub height: usize,
    pub valid_fraction: f64,
    /// `max_k |w_k - w_k(full)|`.
    pub max_drift: f64,
    /// `sum_k |w_k - w_k(full)|`.
    pub l1_drift: f64,
    pub weights: Vec<f64>,
}

/// Box-downsampled photo, mask (valid where at least half the block is),
/// and landmarks in the new pixel grid.
pub fn downsample_photo(
    image: &ImageBuffer,
    landmarks: &Landmarks,
    mask: &SegmentationMask,
    factor: usize,
) -> texface::Result<(ImageBuffer, Landmarks, SegmentationMask)> {
    if factor == 1 {
        return Ok((image.clone(), landmarks.clone(), mask.clone()));
    }
    let small = image.downsample_box(factor)?;
    let coarse = mask.to_image().downsample_box(factor)?;
    let mask = SegmentationMask::new(coarse.width(), coarse.height(), coarse.plane(0).iter().map(|v| *v >= 0.5).collect())?;
    let f = factor as f64;
    let landmarks = Landmarks(landmarks.0.iter().map(|l| Landmark { vertex: l.vertex, point: [l.point[0] / f, l.point[1] / f] }).collect());
    Ok((small, landmarks, mask))
}

/// Fit, extract, and analysis at every resolution factor; drift is
/// measured against the full-resolution weights. Writes `eval_lowres.csv`.
pub fn eval_lowres(cfg: &PipelineConfig) -> CliResult<Vec<LowresRow>> {
    let stage = "eval lowres";
    let model = load_model_file(stage, cfg)?;
    let net = load_network(stage, cfg)?;
    let (db, textures) = load_database(stage, cfg, &cfg.selection)?;
    let (image, landmarks, mask) = load_photo(stage, cfg)?;
    ensure_out(stage, cfg)?;
    let mut factors = vec![1];
    factors.extend(cfg.lowres_factors.iter().copied().filter(|f| *f != 1));
    let mut rows: Vec<LowresRow> = Vec::new();
    for factor in factors {
        let (img, lm, m) = downsample_photo(&image, &landmarks, &mask, factor).map_err(|e| CliError::input(stage, format!("factor {factor}: {e}")))?;
        let report = fit_photo(&img, &lm, &m, &model).map_err(|e| CliError::stage(stage, format!("factor {factor}: {e}")))?;
        let (partial, _) = extract_textures(&img, &m, &report.params, &model, cfg.texture_size)?;
        let fit = blend_partial(&partial, &db, &textures, &net, cfg.blend, &cfg.blend_options)?;
        let base = rows.first().map_or(fit.weights.clone(), |r| r.weights.clone());
        let diffs: Vec<f64> = fit.weights.iter().zip(&base).map(|(a, b)| (a - b).abs()).collect();
        rows.push(LowresRow {
            factor,
            width: img.width(),
            height: img.height(),
            valid_fraction: partial.valid_fraction(),
            max_drift: diffs.iter().copied().fold(0.0, f64::max),
            l1_drift: diffs.iter().sum(),
            weights: fit.weights,
        });
    }
    let mut csv = String::from("factor,width,height,valid_fraction,max_weight_drift,l1_weight_drift\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{:?},{:?},{:?}", r.factor, r.width, r.height, r.valid_fraction, r.max_drift, r.l1_drift);
    }
    fs::write(cfg.artifact("eval_lowres.csv"), csv).map_err(|e| CliError::stage(stage, e))?;
    Ok(rows)
}
