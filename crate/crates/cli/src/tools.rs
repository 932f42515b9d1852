//! `build-db` and `gram-dump`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use texface::analysis::{texture_grams, CorrelationDatabase};
use texface::dbtool::{build_texture_database, persist_correlations, DatabaseBuild, DatabaseOptions, Subject};
use texface::imageio::{load_mask, load_rgb};
use texface::morphable::Landmarks;
use texface::net::GramStack;

use crate::config::{require, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::stages::{load_model_file, load_network};

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectEntry {
    pub photo: PathBuf,
    pub landmarks: PathBuf,
    pub mask: PathBuf,
    pub id: String,
}

/// One `photo landmarks mask id` per line, paths relative to `base`.
pub fn parse_subjects(text: &str, base: &Path) -> CliResult<Vec<SubjectEntry>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [photo, landmarks, mask, id] = parts[..] else {
            return Err(CliError::input("build-db", format!("subjects line {}: expected `photo landmarks mask id`", n + 1)));
        };
        out.push(SubjectEntry { photo: base.join(photo), landmarks: base.join(landmarks), mask: base.join(mask), id: id.to_string() });
    }
    if out.is_empty() {
        return Err(CliError::input("build-db", "subjects manifest lists no subjects"));
    }
    Ok(out)
}

fn load_subject(e: &SubjectEntry) -> CliResult<Subject> {
    let stage = "build-db";
    for (key, p) in [("photo", &e.photo), ("landmarks", &e.landmarks), ("mask", &e.mask)] {
        require(stage, key, p)?;
    }
    let text = fs::read_to_string(&e.landmarks).map_err(|err| CliError::input(stage, format!("{}: {err}", e.landmarks.display())))?;
    Ok(Subject {
        id: e.id.clone(),
        image: load_rgb(&e.photo).map_err(|err| CliError::input(stage, err))?,
        landmarks: Landmarks::parse(&text).map_err(|err| CliError::input(stage, err))?,
        mask: load_mask(&e.mask).map_err(|err| CliError::input(stage, err))?,
    })
}

/// Builds textures for the subjects manifest and writes them with their
/// correlation stacks at the configured database path.
pub fn run_build_db(cfg: &PipelineConfig) -> CliResult<DatabaseBuild> {
    let stage = "build-db";
    let model = load_model_file(stage, cfg)?;
    let net = load_network(stage, cfg)?;
    let text = fs::read_to_string(&cfg.subjects).map_err(|e| CliError::input(stage, format!("subjects file {}: {e}", cfg.subjects.display())))?;
    let entries = parse_subjects(&text, cfg.subjects.parent().unwrap_or(Path::new(".")))?;
    let subjects = entries.iter().map(load_subject).collect::<CliResult<Vec<_>>>()?;
    let opts = DatabaseOptions {
        rounds: cfg.rounds,
        texture_size: cfg.texture_size,
        light_color: cfg.light_color,
        percentile: cfg.percentile,
        ..Default::default()
    };
    let build = build_texture_database(&subjects, &model, &opts).map_err(|e| CliError::stage(stage, e))?;
    if let Some(dir) = cfg.db.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::input(stage, format!("{}: {e}", dir.display())))?;
    }
    let textures: Vec<_> = build.textures.iter().map(|t| (t.id.clone(), t.texture.clone())).collect();
    persist_correlations(&textures, &net, &cfg.selection, &cfg.db).map_err(|e| CliError::stage(stage, e))?;
    Ok(build)
}

fn stack_lines(out: &mut String, label: &str, stack: &GramStack) {
    for (name, g) in &stack.layers {
        let n = g.dim();
        let trace: f64 = (0..n).map(|i| g.get(i, i)).sum();
        let frob = g.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        let _ = writeln!(out, "{label} {name} {n} {trace:.6e} {frob:.6e}");
    }
}

/// `id layer N trace frobenius` per database entry and layer, or the same
/// for the configured texture when one is given.
pub fn run_gram_dump(cfg: &PipelineConfig) -> CliResult<String> {
    let mut out = String::from("# id layer dim trace frobenius\n");
    match &cfg.texture {
        Some(path) => {
            let net = load_network("gram-dump", cfg)?;
            require("gram-dump", "texture", path)?;
            let texture = load_rgb(path).map_err(|e| CliError::input("gram-dump", e))?;
            let stack = texture_grams(&net, &texture, &cfg.selection.gram_layers).map_err(|e| CliError::stage("gram-dump", e))?;
            stack_lines(&mut out, "input", &stack);
        }
        None => {
            require("gram-dump", "db", &cfg.db)?;
            let db = CorrelationDatabase::load(&cfg.db).map_err(|e| CliError::input("gram-dump", e))?;
            for e in db.entries() {
                stack_lines(&mut out, &e.id, &e.stack);
            }
        }
    }
    Ok(out)
}
