//! Experiment harness: runs, ablations, hyperparameter search, transfer,
//! drift and reporting over the feature-discovery loop.

pub mod config;
pub mod drift;
pub mod hpo;
pub mod output;
pub mod report;
pub mod run;
pub mod transfer;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use featloop_core::data::{load_dataset, write_dataset};
use featloop_core::dsl::TransformationFile;
use featloop_core::learners::LearnerKind;
use featloop_core::proposer::Backend;
use featloop_core::synth::{generate, SynthSpec};
use featloop_core::{Dataset, Error, Result};

pub use config::{Config, CONFIG_VERSION};
pub use run::{run_experiment, Ablation, RunOutcome, RunSummary};

use crate::output::write_json;

#[derive(Debug, Parser)]
#[command(name = "featloop", version, about = "Importance-guided feature discovery for tabular binary classification")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "featloop-out")]
    pub out: PathBuf,
    /// Overrides the configured proposer backend.
    #[arg(long, global = true, value_parser = parse_backend)]
    pub backend: Option<Backend>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Table file; overrides `data` in the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Schema sidecar; overrides `schema` in the config.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the loop on every configured split and aggregate test metrics.
    Run(DataArgs),
    /// Run with one component of the loop disabled.
    Ablate {
        #[arg(long, value_enum)]
        variant: Ablation,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Random hyperparameter search for one learner.
    Hpo {
        /// Learner kind; defaults to the configured learner.
        #[arg(long, value_parser = parse_kind)]
        kind: Option<LearnerKind>,
        /// Trial budget; defaults to `hpo_budget`.
        #[arg(long)]
        budget: Option<usize>,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Apply exported programs to another dataset and compare with raw training.
    Transfer {
        /// Transformation export of a source run.
        #[arg(long)]
        export: PathBuf,
        /// TOML table mapping source names to target names.
        #[arg(long)]
        name_map: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Compare a model frozen before a cutoff with per-period retraining.
    Drift {
        /// Ordering column; defaults to `drift_column`.
        #[arg(long)]
        column: Option<String>,
        /// Rows ordered strictly before this value form the discovery data.
        #[arg(long)]
        cutoff: f64,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Consolidate run directories into comparison tables and series files.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Write a synthetic dataset and its schema.
    Synth {
        /// TOML generator spec; defaults apply to absent keys.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

fn parse_backend(s: &str) -> std::result::Result<Backend, String> {
    match s {
        "offline" => Ok(Backend::Offline),
        "http_chat" => Ok(Backend::HttpChat),
        other => Err(format!("unknown backend `{other}`; expected offline or http_chat")),
    }
}

fn parse_kind(s: &str) -> std::result::Result<LearnerKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Config from `--config`, or defaults, with the global overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::current(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(b) = cli.backend {
        cfg.backend = b;
    }
    cfg.check()?;
    Ok(cfg)
}

fn load_data(cfg: &Config, args: &DataArgs) -> Result<Dataset> {
    let missing = |key: &str| Error::Config(format!("no `{key}` path: pass --{key} or set it in the config"));
    let data = args.data.as_ref().or(cfg.data.as_ref()).ok_or_else(|| missing("data"))?;
    let schema = args.schema.as_ref().or(cfg.schema.as_ref()).ok_or_else(|| missing("schema"))?;
    load_dataset(data, schema)
}

pub fn load_synth_spec(path: &Path) -> Result<SynthSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}

/// Writes `data.csv`, `schema.json` and `truth.json` under `out`.
pub fn run_synth(spec: &SynthSpec, out: &Path) -> Result<Dataset> {
    let (dataset, truth) = generate(spec)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_dataset(&dataset, out.join("data.csv"), out.join("schema.json"))?;
    write_json(&out.join("truth.json"), &truth)?;
    Ok(dataset)
}

/// Runs one command and returns the text to print.
pub fn execute(cli: &Cli) -> Result<String> {
    let out = &cli.out;
    match &cli.command {
        Command::Synth { spec } => {
            let mut s = match spec {
                Some(p) => load_synth_spec(p)?,
                None => SynthSpec::default(),
            };
            if let Some(seed) = cli.seed {
                s.seed = seed;
            }
            let d = run_synth(&s, out)?;
            Ok(format!("wrote {} rows to {}\n", d.n_rows(), out.display()))
        }
        Command::Report { dirs } => Ok(report::run_report(dirs, out)?.1),
        Command::Run(args) => {
            let cfg = resolve_config(cli)?;
            Ok(run_experiment(&cfg, &load_data(&cfg, args)?, out, None)?.summary.render())
        }
        Command::Ablate { variant, data } => {
            let cfg = resolve_config(cli)?;
            Ok(run_experiment(&cfg, &load_data(&cfg, data)?, out, Some(*variant))?.summary.render())
        }
        Command::Hpo { kind, budget, data } => {
            let cfg = resolve_config(cli)?;
            let d = load_data(&cfg, data)?;
            let r = hpo::run_hpo(&cfg, &d, kind.unwrap_or(cfg.learner), budget.unwrap_or(cfg.hpo_budget), out)?;
            Ok(hpo::render(&r))
        }
        Command::Transfer { export, name_map, data } => {
            let cfg = resolve_config(cli)?;
            let d = load_data(&cfg, data)?;
            let map = match name_map {
                Some(p) => transfer::load_name_map(p)?,
                None => Default::default(),
            };
            let r = transfer::run_transfer(&cfg, &TransformationFile::read(export)?, &d, &map, out)?;
            Ok(transfer::render(&r))
        }
        Command::Drift { column, cutoff, data } => {
            let cfg = resolve_config(cli)?;
            let d = load_data(&cfg, data)?;
            let col = column.clone().unwrap_or_else(|| cfg.drift_column.clone());
            Ok(drift::render(&drift::run_drift(&cfg, &d, &col, *cutoff, out)?))
        }
    }
}
