//! Flat experiment configuration read from a TOML file.
//!
//! Every key is optional except `config_version`; unknown keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use featloop_core::engine::{AcceptMode, EngineConfig, IslandSize, Metric};
use featloop_core::explain::DEFAULT_REPEATS;
use featloop_core::learners::{HpoOptions, LearnerKind, LearnerSpec};
use featloop_core::proposer::{
    http::DEFAULT_RETRIES, Backend, HttpSettings, PromptOptions, ProposerConfig, DEFAULT_MEMORY_CAP,
    DEFAULT_PROMPT_BUDGET,
};
use featloop_core::seed::derive_seed;
use featloop_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

/// `island_size = 3` or `island_size = "all"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IslandSizeSetting {
    Count(usize),
    Keyword(String),
}

impl IslandSizeSetting {
    fn resolve(&self) -> Result<IslandSize> {
        match self {
            IslandSizeSetting::Count(n) => Ok(IslandSize::Fixed(*n)),
            IslandSizeSetting::Keyword(k) if k == "all" => Ok(IslandSize::AllGroups),
            IslandSizeSetting::Keyword(k) => Err(Error::Config(format!(
                "island_size: expected a count or \"all\", got \"{k}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Must equal [`CONFIG_VERSION`]; zero means the key was absent.
    pub config_version: u32,
    /// Task label used in consolidated reports.
    pub task: String,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,

    pub learner: LearnerKind,
    pub learner_params: BTreeMap<String, f64>,

    pub iterations: usize,
    pub islands: usize,
    pub island_size: IslandSizeSetting,
    pub beta: f64,
    pub acceptance_mode: AcceptMode,
    pub metric: Metric,
    /// Proposal attempts per island and iteration.
    pub retries: usize,
    pub seed: u64,
    pub n_splits: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub explainer_repeats: usize,
    pub task_description: String,
    pub prompt_budget: usize,
    pub memory_cap: usize,

    pub backend: Backend,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub http_retries: usize,
    pub backoff_ms: u64,

    pub hpo_budget: usize,
    pub hpo_patience: usize,
    pub hpo_min_improvement: f64,

    /// Ordering column used by the drift command.
    pub drift_column: String,
}

impl Default for Config {
    fn default() -> Self {
        let engine = EngineConfig::default();
        let http = HttpSettings::default();
        let hpo = HpoOptions::default();
        Self {
            config_version: 0,
            task: String::new(),
            data: None,
            schema: None,
            learner: LearnerKind::Logreg,
            learner_params: BTreeMap::new(),
            iterations: engine.iterations,
            islands: engine.islands,
            island_size: IslandSizeSetting::Count(3),
            beta: engine.beta,
            acceptance_mode: engine.acceptance_mode,
            metric: engine.metric,
            retries: engine.retries,
            seed: 0,
            n_splits: 3,
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
            explainer_repeats: DEFAULT_REPEATS,
            task_description: String::new(),
            prompt_budget: DEFAULT_PROMPT_BUDGET,
            memory_cap: DEFAULT_MEMORY_CAP,
            backend: Backend::Offline,
            endpoint: http.endpoint,
            model: http.model,
            temperature: http.temperature,
            api_key_env: http.api_key_env,
            timeout_secs: http.timeout_secs,
            http_retries: DEFAULT_RETRIES,
            backoff_ms: http.backoff_ms,
            hpo_budget: 400,
            hpo_patience: hpo.patience,
            hpo_min_improvement: hpo.min_improvement,
            drift_column: featloop_core::synth::PERIOD_COLUMN.to_string(),
        }
    }
}

impl Config {
    /// Defaults with the current version; what runs use when no file is given.
    pub fn current() -> Self {
        Self {
            config_version: CONFIG_VERSION,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a file; relative data and schema paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data, &mut cfg.schema].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.config_version == 0 {
            return bad("missing key `config_version`".into());
        }
        if self.config_version != CONFIG_VERSION {
            return bad(format!(
                "config_version: unsupported version {}, expected {CONFIG_VERSION}",
                self.config_version
            ));
        }
        if self.n_splits == 0 {
            return bad("n_splits: must be at least 1".into());
        }
        let f = [self.train_fraction, self.val_fraction, self.test_fraction];
        if f.iter().any(|v| !(*v > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("train_fraction, val_fraction, test_fraction: must be positive and sum to 1".into());
        }
        if self.explainer_repeats == 0 {
            return bad("explainer_repeats: must be at least 1".into());
        }
        if self.hpo_budget == 0 {
            return bad("hpo_budget: must be at least 1".into());
        }
        self.island_size.resolve()?;
        self.learner_spec(0).validate()?;
        self.engine_config(0)?.check()
    }

    pub fn fractions(&self) -> (f64, f64, f64) {
        (self.train_fraction, self.val_fraction, self.test_fraction)
    }

    /// Seed of split `i`; also the learner seed for that split.
    pub fn split_seed(&self, i: usize) -> u64 {
        derive_seed(self.seed, &["split".into(), i.into()])
    }

    pub fn engine_config(&self, i: usize) -> Result<EngineConfig> {
        Ok(EngineConfig {
            iterations: self.iterations,
            islands: self.islands,
            island_size: self.island_size.resolve()?,
            beta: self.beta,
            acceptance_mode: self.acceptance_mode,
            metric: self.metric,
            retries: self.retries,
            seed: self.seed.wrapping_add(i as u64),
            uniform_importance: false,
            prompt: PromptOptions {
                budget: self.prompt_budget,
                memory_cap: self.memory_cap,
                ..PromptOptions::default()
            },
            task_description: self.task_description.clone(),
        })
    }

    pub fn learner_spec(&self, i: usize) -> LearnerSpec {
        LearnerSpec {
            kind: self.learner,
            hyperparams: self.learner_params.clone(),
            seed: self.split_seed(i),
        }
    }

    pub fn proposer_config(&self, i: usize) -> ProposerConfig {
        ProposerConfig {
            backend: self.backend,
            http: HttpSettings {
                endpoint: self.endpoint.clone(),
                model: self.model.clone(),
                temperature: self.temperature,
                api_key_env: self.api_key_env.clone(),
                timeout_secs: self.timeout_secs,
                retries: self.http_retries,
                backoff_ms: self.backoff_ms,
            },
            seed: self.seed.wrapping_add(i as u64),
        }
    }

    pub fn hpo_options(&self) -> HpoOptions {
        HpoOptions {
            patience: self.hpo_patience,
            min_improvement: self.hpo_min_improvement,
        }
    }
}
