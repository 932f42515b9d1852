use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{PipelineConfig, Settings};
use crate::error::{CliError, CliResult};
use crate::{eval, fixture, stages, tools};

#[derive(Parser, Debug)]
#[command(name = "texface", version, about = "Facial albedo texture inference from a single photo")]
pub struct Cli {
    #[command(flatten)]
    pub settings: SettingFlags,
    #[command(subcommand)]
    pub command: Command,
}

/// Every config key is also a flag; flags win over the config file.
#[derive(Args, Debug, Default)]
pub struct SettingFlags {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Any config key as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub weights: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub db: Option<String>,
    #[arg(long, global = true)]
    pub image: Option<String>,
    #[arg(long, global = true)]
    pub landmarks: Option<String>,
    #[arg(long, global = true)]
    pub mask: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<String>,
    #[arg(long, global = true)]
    pub subjects: Option<String>,
    #[arg(long, global = true)]
    pub texture: Option<String>,
    #[arg(long, global = true)]
    pub gram_layers: Option<String>,
    #[arg(long, global = true)]
    pub feature_layers: Option<String>,
    #[arg(long, global = true)]
    pub alpha: Option<String>,
    #[arg(long, global = true)]
    pub iterations: Option<String>,
    #[arg(long, global = true)]
    pub blend: Option<String>,
    #[arg(long, global = true)]
    pub texture_size: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit the morphable model to the photo; writes chi.txt.
    Fit,
    /// Partial albedo and low-frequency textures from the fit.
    Extract,
    /// Convex blend weights of the database for the partial texture.
    Analyze,
    /// Synthesize the full texture from the blended targets.
    Synthesize,
    /// Every stage in sequence plus preview and manifest.
    Pipeline,
    /// Build a texture database from a subjects manifest.
    BuildDb,
    /// Print Gram statistics of the database or of `--texture`.
    GramDump,
    #[command(subcommand)]
    Eval(EvalCommand),
    /// SH-lit render of a texture under the fitted scene.
    Preview,
    /// Write the synthetic fixture into a directory.
    MakeFixture { dir: PathBuf },
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Sweep the number of Gram layers.
    Layers,
    /// Sweep input downsampling factors.
    Lowres,
}

impl SettingFlags {
    pub fn settings(&self, cwd: &Path) -> CliResult<Settings> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        let mut flags = Settings::default();
        let named = [
            ("weights", &self.weights),
            ("model", &self.model),
            ("db", &self.db),
            ("image", &self.image),
            ("landmarks", &self.landmarks),
            ("mask", &self.mask),
            ("out", &self.out),
            ("subjects", &self.subjects),
            ("texture", &self.texture),
            ("gram_layers", &self.gram_layers),
            ("feature_layers", &self.feature_layers),
            ("alpha", &self.alpha),
            ("iterations", &self.iterations),
            ("blend", &self.blend),
            ("texture_size", &self.texture_size),
        ];
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::input("config", format!("--set expects KEY=VALUE, got {kv}")))?;
            flags.set(k.trim(), v.trim(), cwd)?;
        }
        for (key, value) in named {
            if let Some(v) = value {
                flags.set(key, v, cwd)?;
            }
        }
        s.overlay(flags);
        Ok(s)
    }
}

/// Runs one command and returns its printable report.
pub fn execute(cli: &Cli) -> CliResult<String> {
    if let Command::MakeFixture { dir } = &cli.command {
        fixture::make_fixture(dir)?;
        return Ok(format!("fixture written to {}\n", dir.display()));
    }
    let settings = cli.settings.settings(Path::new("."))?;
    let cfg = PipelineConfig::from_settings(&settings)?;
    Ok(match &cli.command {
        Command::Fit => {
            let r = stages::run_fit(&cfg)?;
            format!("fit: energy {:.6e} (photometric {:.6e}, landmarks {:.6e})\n", r.terms.total, r.terms.photometric, r.terms.landmark)
        }
        Command::Extract => {
            let p = stages::run_extract(&cfg)?;
            format!("extract: {:.1}% of texels valid\n", 100.0 * p.valid_fraction())
        }
        Command::Analyze => {
            let f = stages::run_analyze(&cfg)?;
            format!("analyze: {} weights, objective {:.6e}\n", f.weights.len(), f.objective)
        }
        Command::Synthesize => {
            let r = stages::run_synthesize(&cfg)?;
            let first = r.trace.first().map_or(f64::NAN, |t| t.total);
            format!("synthesize: loss {first:.6e} -> {:.6e} in {} iterations ({:?})\n", r.final_loss(), r.iterations, r.termination)
        }
        Command::Pipeline => stages::run_pipeline(&cfg)?,
        Command::BuildDb => {
            let b = tools::run_build_db(&cfg)?;
            let mut s = format!("build-db: {} textures written beside {}\n", b.textures.len(), cfg.db.display());
            for (id, why) in &b.skipped {
                s.push_str(&format!("skipped {id}: {why}\n"));
            }
            s
        }
        Command::GramDump => tools::run_gram_dump(&cfg)?,
        Command::Eval(EvalCommand::Layers) => {
            let rows = eval::eval_layers(&cfg)?;
            let mut s = String::from("gram_layers final_loss laplacian_variance\n");
            for r in rows {
                s.push_str(&format!("{} {:.6e} {:.6e}\n", r.gram_layers, r.final_loss, r.laplacian_variance));
            }
            s
        }
        Command::Eval(EvalCommand::Lowres) => {
            let rows = eval::eval_lowres(&cfg)?;
            let mut s = String::from("factor size max_weight_drift\n");
            for r in rows {
                s.push_str(&format!("{} {}x{} {:.3e}\n", r.factor, r.width, r.height, r.max_drift));
            }
            s
        }
        Command::Preview => format!("preview written to {}\n", stages::run_preview(&cfg)?.display()),
        Command::MakeFixture { .. } => unreachable!("handled above"),
    })
}

/// Parses arguments, runs, prints, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("texface {e}");
            e.exit_code()
        }
    }
}
