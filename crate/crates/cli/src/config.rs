//! `key = value` configuration. Relative paths in a config file resolve
//! against the file's directory; relative paths given as flags resolve
//! against the working directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use texface::analysis::BlendMode;
use texface::dbtool::DEFAULT_PERCENTILE;
use texface::net::LayerSelection;
use texface::numerics::SimplexLsqOptions;
use texface::synthesis::SynthesisConfig;

use crate::error::{CliError, CliResult};

pub const PATH_KEYS: &[&str] = &["weights", "model", "db", "image", "landmarks", "mask", "out", "subjects", "texture"];
pub const VALUE_KEYS: &[&str] = &[
    "gram_layers",
    "feature_layers",
    "alpha",
    "iterations",
    "history",
    "blend",
    "normalize_layers",
    "texture_size",
    "deterministic",
    "rounds",
    "percentile",
    "light_color",
    "layer_counts",
    "lowres_factors",
];

fn known(key: &str) -> bool {
    PATH_KEYS.contains(&key) || VALUE_KEYS.contains(&key)
}

/// Raw settings: each value with the directory relative paths resolve to.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, (String, PathBuf)>,
}

impl Settings {
    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let mut s = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::input("config", format!("line {}: expected `key = value`, got {line:?}", n + 1)))?;
            s.set(key.trim(), value.trim(), base)?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input("config", format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> CliResult<()> {
        if !known(key) {
            return Err(CliError::input("config", format!("unknown key {key}")));
        }
        self.values.insert(key.to_string(), (value.to_string(), base.to_path_buf()));
        Ok(())
    }

    /// Applies `other` on top of `self`.
    pub fn overlay(&mut self, other: Settings) {
        self.values.extend(other.values);
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    fn path(&self, key: &str, default: &str) -> PathBuf {
        match self.values.get(key) {
            Some((v, base)) => base.join(v),
            None => PathBuf::from(default),
        }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            Some(v) => v.parse().map_err(|e| CliError::input("config", format!("{key} = {v}: {e}"))),
            None => Ok(default),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str, default: Vec<T>) -> CliResult<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(|p| p.parse().map_err(|e| CliError::input("config", format!("{key} = {v}: {e}"))))
                .collect(),
            None => Ok(default),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub weights: PathBuf,
    pub model: PathBuf,
    pub db: PathBuf,
    pub image: PathBuf,
    pub landmarks: PathBuf,
    pub mask: PathBuf,
    pub out: PathBuf,
    pub subjects: PathBuf,
    /// Texture input of `preview` and `gram-dump`.
    pub texture: Option<PathBuf>,
    pub selection: LayerSelection,
    pub synthesis: SynthesisConfig,
    pub blend: BlendMode,
    pub blend_options: SimplexLsqOptions,
    pub texture_size: usize,
    /// All stages are free of randomness; the flag is recorded in the
    /// manifest.
    pub deterministic: bool,
    pub rounds: usize,
    pub percentile: f64,
    pub light_color: [f64; 3],
    pub layer_counts: Vec<usize>,
    pub lowres_factors: Vec<usize>,
}

impl PipelineConfig {
    pub fn from_settings(s: &Settings) -> CliResult<Self> {
        let defaults = LayerSelection::vgg_default();
        let selection = LayerSelection::new(s.list("gram_layers", defaults.gram_layers)?, s.list("feature_layers", defaults.feature_layers)?);
        let base = SynthesisConfig::default();
        let synthesis = SynthesisConfig {
            alpha: s.parsed("alpha", base.alpha)?,
            max_iterations: s.parsed("iterations", base.max_iterations)?,
            history: s.parsed("history", base.history)?,
            selection: selection.clone(),
            bounds: base.bounds,
        };
        synthesis.validate().map_err(|e| CliError::input("config", e))?;
        let light: Vec<f64> = s.list("light_color", vec![1.0; 3])?;
        let light_color: [f64; 3] =
            light.try_into().map_err(|v: Vec<f64>| CliError::input("config", format!("light_color needs 3 values, got {}", v.len())))?;
        let cfg = Self {
            weights: s.path("weights", "net.vggw"),
            model: s.path("model", "model.mmdl"),
            db: s.path("db", "db/correlations.grdb"),
            image: s.path("image", "input.png"),
            landmarks: s.path("landmarks", "landmarks.txt"),
            mask: s.path("mask", "mask.png"),
            out: s.path("out", "out"),
            subjects: s.path("subjects", "subjects.txt"),
            texture: s.values.contains_key("texture").then(|| s.path("texture", "")),
            selection,
            synthesis,
            blend: s.parsed("blend", BlendMode::Convex)?,
            blend_options: SimplexLsqOptions { normalize_layers: s.parsed("normalize_layers", false)?, ..Default::default() },
            texture_size: s.parsed("texture_size", 512)?,
            deterministic: s.parsed("deterministic", true)?,
            rounds: s.parsed("rounds", 5)?,
            percentile: s.parsed("percentile", DEFAULT_PERCENTILE)?,
            light_color,
            layer_counts: s.list("layer_counts", vec![1, 2, 3, 4, 5])?,
            lowres_factors: s.list("lowres_factors", vec![1, 2, 3, 4])?,
        };
        if cfg.texture_size < 8 {
            return Err(CliError::input("config", format!("texture_size {} is too small", cfg.texture_size)));
        }
        if cfg.selection.gram_layers.is_empty() {
            return Err(CliError::input("config", "gram_layers is empty"));
        }
        if cfg.lowres_factors.contains(&0) || cfg.layer_counts.contains(&0) {
            return Err(CliError::input("config", "layer counts and resolution factors must be positive"));
        }
        Ok(cfg)
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Fails with an input error naming `key` and the path when it is absent.
pub fn require(stage: &'static str, key: &str, path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::input(stage, format!("{key} file {} does not exist", path.display())))
    }
}
