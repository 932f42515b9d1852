//! Stage commands. Each stage reads its inputs from files and writes its
//! artifacts to the output directory; `pipeline` runs the same functions in
//! sequence, so separately run stages reproduce it byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use texface::analysis::{
    assemble_targets, fit_convex_weights, mask_out, persisted_texture_path, texture_grams, BlendFit, BlendMode, CorrelationDatabase,
};
use texface::imageio::{load_mask, load_partial, load_rgb, save_image, save_partial, BitDepth};
use texface::morphable::{
    bake_lowfreq_texture, extract_partial_albedo, fit_model, initial_params, load_model, render_textured, FitOptions, FitReport, Landmarks,
    MorphableModel, PartialTexture, SceneParams, SegmentationMask,
};
use texface::net::{load_weights, LayerSelection, NetworkSpec};
use texface::numerics::{ImageBuffer, SimplexLsqOptions};
use texface::synthesis::{synthesize, trace_csv, SynthesisConfig, SynthesisResult};

use crate::config::{require, PipelineConfig};
use crate::error::{CliError, CliResult};

pub const CHI: &str = "chi.txt";
pub const PARTIAL: &str = "partial.png";
pub const LOWFREQ: &str = "lowfreq.png";
pub const WEIGHTS: &str = "weights.csv";
pub const TRACE: &str = "trace.csv";
pub const FINAL: &str = "final.png";
pub const PREVIEW: &str = "preview.png";
pub const MANIFEST: &str = "manifest.txt";

/// Pipeline artifacts in manifest order.
pub const ARTIFACTS: [&str; 7] = [CHI, PARTIAL, LOWFREQ, WEIGHTS, TRACE, FINAL, PREVIEW];

fn input_err(stage: &'static str) -> impl Fn(texface::Error) -> CliError {
    move |e| CliError::input(stage, e)
}

fn stage_err(stage: &'static str) -> impl Fn(texface::Error) -> CliError {
    move |e| CliError::stage(stage, e)
}

fn write_text(stage: &'static str, path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::stage(stage, format!("cannot write {}: {e}", path.display())))
}

fn read_text(stage: &'static str, key: &str, path: &Path) -> CliResult<String> {
    require(stage, key, path)?;
    fs::read_to_string(path).map_err(|e| CliError::input(stage, format!("cannot read {key} file {}: {e}", path.display())))
}

pub fn ensure_out(stage: &'static str, cfg: &PipelineConfig) -> CliResult<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::input(stage, format!("output directory {} is not writable: {e}", cfg.out.display())))
}

pub fn load_model_file(stage: &'static str, cfg: &PipelineConfig) -> CliResult<MorphableModel> {
    require(stage, "model", &cfg.model)?;
    load_model(&cfg.model).map_err(input_err(stage))
}

pub fn load_network(stage: &'static str, cfg: &PipelineConfig) -> CliResult<NetworkSpec> {
    require(stage, "weights", &cfg.weights)?;
    let net = load_weights(&cfg.weights).map_err(input_err(stage))?;
    cfg.selection.validate(&net).map_err(input_err(stage))?;
    Ok(net)
}

/// Photo, landmarks, and mask named by the configuration.
pub fn load_photo(stage: &'static str, cfg: &PipelineConfig) -> CliResult<(ImageBuffer, Landmarks, SegmentationMask)> {
    require(stage, "image", &cfg.image)?;
    let image = load_rgb(&cfg.image).map_err(input_err(stage))?;
    let landmarks = Landmarks::parse(&read_text(stage, "landmarks", &cfg.landmarks)?).map_err(input_err(stage))?;
    require(stage, "mask", &cfg.mask)?;
    let mask = load_mask(&cfg.mask).map_err(input_err(stage))?;
    mask.matches(&image).map_err(input_err(stage))?;
    Ok((image, landmarks, mask))
}

/// The database restricted to the selection's Gram layers, and its stored
/// textures in entry order.
pub fn load_database(stage: &'static str, cfg: &PipelineConfig, selection: &LayerSelection) -> CliResult<(CorrelationDatabase, Vec<ImageBuffer>)> {
    require(stage, "db", &cfg.db)?;
    let db = CorrelationDatabase::load(&cfg.db).map_err(input_err(stage))?;
    let db = if db.layer_names() == selection.gram_layers { db } else { db.select_layers(&selection.gram_layers).map_err(input_err(stage))? };
    let textures = db
        .ids()
        .iter()
        .map(|id| {
            let path = persisted_texture_path(&cfg.db, id);
            require(stage, "database texture", &path)?;
            load_rgb(&path).map_err(input_err(stage))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((db, textures))
}

/// Pyramid fit from the landmark-based starting point.
pub fn fit_photo(image: &ImageBuffer, landmarks: &Landmarks, mask: &SegmentationMask, model: &MorphableModel) -> CliResult<FitReport> {
    let init = initial_params(model, image, mask, landmarks).map_err(input_err("fit"))?;
    fit_model(image, landmarks, mask, model, &init, &FitOptions::default())
        .map_err(|f| if f.stage == "setup" { CliError::input("fit", f) } else { CliError::stage("fit", f) })
}

pub fn run_fit(cfg: &PipelineConfig) -> CliResult<FitReport> {
    let model = load_model_file("fit", cfg)?;
    let (image, landmarks, mask) = load_photo("fit", cfg)?;
    ensure_out("fit", cfg)?;
    let report = fit_photo(&image, &landmarks, &mask, &model)?;
    write_text("fit", &cfg.artifact(CHI), &report.params.to_text())?;
    Ok(report)
}

pub fn load_chi(stage: &'static str, cfg: &PipelineConfig) -> CliResult<SceneParams> {
    let path = cfg.artifact(CHI);
    SceneParams::from_text(&read_text(stage, "fitted parameter", &path)?).map_err(input_err(stage))
}

pub fn extract_textures(
    image: &ImageBuffer,
    mask: &SegmentationMask,
    chi: &SceneParams,
    model: &MorphableModel,
    size: usize,
) -> CliResult<(PartialTexture, ImageBuffer)> {
    let partial = extract_partial_albedo(image, chi, mask, model, size).map_err(stage_err("extract"))?;
    let lowfreq = bake_lowfreq_texture(model, &chi.coeffs.albedo, size).map_err(stage_err("extract"))?;
    Ok((partial, lowfreq))
}

pub fn run_extract(cfg: &PipelineConfig) -> CliResult<PartialTexture> {
    let model = load_model_file("extract", cfg)?;
    let (image, _, mask) = load_photo("extract", cfg)?;
    let chi = load_chi("extract", cfg)?;
    chi.validate(&model).map_err(input_err("extract"))?;
    ensure_out("extract", cfg)?;
    let (partial, lowfreq) = extract_textures(&image, &mask, &chi, &model, cfg.texture_size)?;
    save_partial(&partial, &cfg.artifact(PARTIAL)).map_err(stage_err("extract"))?;
    save_image(&lowfreq, &cfg.artifact(LOWFREQ), BitDepth::Sixteen).map_err(stage_err("extract"))?;
    Ok(partial)
}

/// Blend weights of the database for one partial texture.
pub fn blend_partial(
    partial: &PartialTexture,
    db: &CorrelationDatabase,
    textures: &[ImageBuffer],
    net: &NetworkSpec,
    mode: BlendMode,
    options: &SimplexLsqOptions,
) -> CliResult<BlendFit> {
    let layers = db.layer_names();
    let masked = mask_out(&partial.albedo, &partial.validity).map_err(stage_err("analyze"))?;
    let input = texture_grams(net, &masked, &layers).map_err(stage_err("analyze"))?;
    let basis = db.masked_stacks(textures, &partial.validity, net).map_err(stage_err("analyze"))?;
    fit_convex_weights(&input, &basis, mode, options).map_err(stage_err("analyze"))
}

pub fn weights_csv(ids: &[&str], weights: &[f64]) -> String {
    let mut s = String::from("id,weight\n");
    for (id, w) in ids.iter().zip(weights) {
        let _ = writeln!(s, "{id},{w:?}");
    }
    s
}

/// Weights in database order; ids must match the database's.
pub fn parse_weights_csv(text: &str, ids: &[&str]) -> CliResult<Vec<f64>> {
    let bad = |msg: String| CliError::input("synthesize", format!("weights file: {msg}"));
    let mut rows = text.lines().filter(|l| !l.trim().is_empty());
    if rows.next().map(str::trim) != Some("id,weight") {
        return Err(bad("missing `id,weight` header".into()));
    }
    let mut weights = Vec::new();
    for (k, row) in rows.enumerate() {
        let (id, w) = row.split_once(',').ok_or_else(|| bad(format!("row {}: {row:?}", k + 1)))?;
        if ids.get(k) != Some(&id.trim()) {
            return Err(bad(format!("row {} names {id}, database entry is {:?}", k + 1, ids.get(k))));
        }
        weights.push(w.trim().parse::<f64>().map_err(|e| bad(format!("row {}: {e}", k + 1)))?);
    }
    if weights.len() != ids.len() {
        return Err(bad(format!("{} rows for {} database entries", weights.len(), ids.len())));
    }
    Ok(weights)
}

pub fn run_analyze(cfg: &PipelineConfig) -> CliResult<BlendFit> {
    let net = load_network("analyze", cfg)?;
    let (db, textures) = load_database("analyze", cfg, &cfg.selection)?;
    let path = cfg.artifact(PARTIAL);
    require("analyze", "partial texture", &path)?;
    let partial = load_partial(&path).map_err(input_err("analyze"))?;
    ensure_out("analyze", cfg)?;
    let fit = blend_partial(&partial, &db, &textures, &net, cfg.blend, &cfg.blend_options)?;
    write_text("analyze", &cfg.artifact(WEIGHTS), &weights_csv(&db.ids(), &fit.weights))?;
    Ok(fit)
}

pub fn synthesize_texture(
    lowfreq: &ImageBuffer,
    weights: &[f64],
    db: &CorrelationDatabase,
    net: &NetworkSpec,
    synthesis: &SynthesisConfig,
) -> CliResult<SynthesisResult> {
    let targets = assemble_targets(weights, db, lowfreq, net, &synthesis.selection).map_err(stage_err("synthesize"))?;
    synthesize(lowfreq, &targets, net, synthesis).map_err(stage_err("synthesize"))
}

pub fn run_synthesize(cfg: &PipelineConfig) -> CliResult<SynthesisResult> {
    let net = load_network("synthesize", cfg)?;
    let (db, _) = load_database("synthesize", cfg, &cfg.selection)?;
    let path = cfg.artifact(LOWFREQ);
    require("synthesize", "low-frequency texture", &path)?;
    let lowfreq = load_rgb(&path).map_err(input_err("synthesize"))?;
    let weights = parse_weights_csv(&read_text("synthesize", "blend weights", &cfg.artifact(WEIGHTS))?, &db.ids())?;
    ensure_out("synthesize", cfg)?;
    let result = synthesize_texture(&lowfreq, &weights, &db, &net, &cfg.synthesis)?;
    write_text("synthesize", &cfg.artifact(TRACE), &trace_csv(&result.trace))?;
    save_image(&result.texture, &cfg.artifact(FINAL), BitDepth::Sixteen).map_err(stage_err("synthesize"))?;
    Ok(result)
}

/// SH-lit render of `texture` (default: the final texture) under the fitted
/// scene at the input photo's size.
pub fn run_preview(cfg: &PipelineConfig) -> CliResult<PathBuf> {
    let model = load_model_file("preview", cfg)?;
    let chi = load_chi("preview", cfg)?;
    let texture_path = cfg.texture.clone().unwrap_or_else(|| cfg.artifact(FINAL));
    require("preview", "texture", &texture_path)?;
    let texture = load_rgb(&texture_path).map_err(input_err("preview"))?;
    require("preview", "image", &cfg.image)?;
    let photo = load_rgb(&cfg.image).map_err(input_err("preview"))?;
    ensure_out("preview", cfg)?;
    let render = render_textured(&model, &chi, &texture, photo.width(), photo.height()).map_err(stage_err("preview"))?;
    let path = cfg.artifact(PREVIEW);
    save_image(&render, &path, BitDepth::Sixteen).map_err(stage_err("preview"))?;
    Ok(path)
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::stage("manifest", format!("cannot read {}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// `sha256  name` lines for every artifact.
pub fn manifest_text(cfg: &PipelineConfig) -> CliResult<String> {
    let mut s = format!("# texface pipeline artifacts\n# deterministic = {}\n", cfg.deterministic);
    for name in ARTIFACTS {
        let _ = writeln!(s, "{}  {name}", sha256_file(&cfg.artifact(name))?);
    }
    Ok(s)
}

/// `(name, hash)` pairs of a manifest.
pub fn parse_manifest(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|l| l.split_once("  ").map(|(h, n)| (n.to_string(), h.to_string())))
        .collect()
}

/// Checks every input up front, then runs fit, extract, analyze, synthesize,
/// and preview, and writes the manifest.
pub fn run_pipeline(cfg: &PipelineConfig) -> CliResult<String> {
    for (key, path) in [("weights", &cfg.weights), ("model", &cfg.model), ("db", &cfg.db), ("image", &cfg.image), ("landmarks", &cfg.landmarks), ("mask", &cfg.mask)] {
        require("pipeline", key, path)?;
    }
    ensure_out("pipeline", cfg)?;
    run_fit(cfg)?;
    run_extract(cfg)?;
    run_analyze(cfg)?;
    run_synthesize(cfg)?;
    run_preview(&PipelineConfig { texture: None, ..cfg.clone() })?;
    let manifest = manifest_text(cfg)?;
    write_text("pipeline", &cfg.artifact(MANIFEST), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_csv_round_trip() {
        let ids = ["a", "b", "c"];
        let w = [0.1, 0.2, 0.7000000000000001];
        assert_eq!(parse_weights_csv(&weights_csv(&ids, &w), &ids).unwrap(), w.to_vec());
        assert!(parse_weights_csv(&weights_csv(&ids, &w), &["a", "c", "b"]).is_err());
        assert!(parse_weights_csv("id,weight\na,1\n", &ids).is_err());
        assert!(parse_weights_csv("a,1\n", &["a"]).is_err());
    }

    #[test]
    fn manifest_lines_parse() {
        let text = "# header\nabc  chi.txt\ndef  final.png\n";
        assert_eq!(parse_manifest(text), vec![("chi.txt".into(), "abc".into()), ("final.png".into(), "def".into())]);
    }
}
