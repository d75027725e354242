//! Downstream learners: balanced L2 logistic regression and histogram
//! gradient-boosted trees, plus random-search hyperparameter optimization.
//!
//! All preprocessing state (imputation medians, standardization, one-hot
//! vocabularies, bin edges) is fitted on training rows only.

pub mod encode;
pub mod gbdt;
mod hpo;
pub mod logreg;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub use encode::Encoder;
pub use gbdt::{GbdtModel, GbdtParams};
pub use hpo::{hpo_search, sample_params, search_space, HpoOptions, HpoResult, ParamScale, Trial};
pub use logreg::{LogregModel, LogregParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Logreg,
    Gbdt,
}

impl LearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Logreg => "logreg",
            LearnerKind::Gbdt => "gbdt",
        }
    }

    /// Hyperparameter keys accepted by this kind.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            LearnerKind::Logreg => &["C", "max_iter", "tol"],
            LearnerKind::Gbdt => &[
                "n_estimators",
                "max_depth",
                "learning_rate",
                "min_child_weight",
                "max_delta_step",
                "subsample",
                "colsample_bytree",
                "colsample_bylevel",
                "gamma",
                "reg_alpha",
                "reg_lambda",
            ],
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(LearnerKind::Logreg),
            "gbdt" => Ok(LearnerKind::Gbdt),
            other => Err(Error::LearnerSpec(format!("unknown learner kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    #[serde(default)]
    pub hyperparams: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
}

fn as_count(key: &str, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::LearnerSpec(format!("`{key}` must be a non-negative integer, got {v}")))
    }
}

impl LearnerSpec {
    /// A spec with every hyperparameter at its default.
    pub fn new(kind: LearnerKind) -> Self {
        Self {
            kind,
            hyperparams: BTreeMap::new(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Result<Self> {
        self.hyperparams.insert(key.to_string(), value);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let keys = self.kind.keys();
        for (k, v) in &self.hyperparams {
            if !keys.contains(&k.as_str()) {
                return Err(Error::LearnerSpec(format!(
                    "unknown {} hyperparameter `{k}` (expected one of: {})",
                    self.kind,
                    keys.join(", ")
                )));
            }
            if !v.is_finite() {
                return Err(Error::LearnerSpec(format!("`{k}` must be finite")));
            }
        }
        match self.kind {
            LearnerKind::Logreg => {
                let p = self.logreg_params()?;
                if p.c > 0.0 && p.tol > 0.0 {
                    Ok(())
                } else {
                    Err(Error::LearnerSpec("`C` and `tol` must be positive".into()))
                }
            }
            LearnerKind::Gbdt => self.gbdt_params()?.check(),
        }
    }

    pub fn logreg_params(&self) -> Result<LogregParams> {
        let mut p = LogregParams::default();
        for (k, &v) in &self.hyperparams {
            match k.as_str() {
                "C" => p.c = v,
                "max_iter" => p.max_iter = as_count(k, v)?,
                "tol" => p.tol = v,
                _ => {}
            }
        }
        Ok(p)
    }

    pub fn gbdt_params(&self) -> Result<GbdtParams> {
        let mut p = GbdtParams::default();
        for (k, &v) in &self.hyperparams {
            match k.as_str() {
                "n_estimators" => p.n_estimators = as_count(k, v)?,
                "max_depth" => p.max_depth = as_count(k, v)?,
                "learning_rate" => p.learning_rate = v,
                "min_child_weight" => p.min_child_weight = v,
                "max_delta_step" => p.max_delta_step = v,
                "subsample" => p.subsample = v,
                "colsample_bytree" => p.colsample_bytree = v,
                "colsample_bylevel" => p.colsample_bylevel = v,
                "gamma" => p.gamma = v,
                "reg_alpha" => p.reg_alpha = v,
                "reg_lambda" => p.reg_lambda = v,
                _ => {}
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Logreg(LogregModel),
    Gbdt(GbdtModel),
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A fitted learner together with its train-fitted preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: LearnerSpec,
    pub encoder: Encoder,
    pub params: ModelParams,
}

/// Anything that turns dataset rows into positive-class scores.
pub trait Scorer: Send + Sync {
    /// Source columns read by the model, in order.
    fn feature_names(&self) -> Vec<String>;

    fn predict_scores(&self, dataset: &Dataset, indices: &[usize]) -> Result<Vec<f64>>;

    /// Persistable form, when the scorer has one.
    fn to_json(&self) -> Option<String> {
        None
    }
}

/// A training procedure producing a [`Scorer`].
pub trait Learner: Send + Sync {
    fn kind(&self) -> LearnerKind;

    fn fit(&self, dataset: &Dataset, train: &[usize]) -> Result<Box<dyn Scorer>>;
}

fn sorted_rows(train: &[usize]) -> Vec<usize> {
    let mut rows = train.to_vec();
    rows.sort_unstable();
    rows.dedup();
    rows
}

pub fn train_logreg(dataset: &Dataset, train: &[usize], spec: &LearnerSpec) -> Result<TrainedModel> {
    spec.validate()?;
    let (encoder, model) = logreg::train(dataset, &sorted_rows(train), &spec.logreg_params()?)?;
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        encoder,
        params: ModelParams::Logreg(model),
    })
}

/// Also returns the per-round weighted training loss.
pub fn train_gbdt_traced(dataset: &Dataset, train: &[usize], spec: &LearnerSpec) -> Result<(TrainedModel, Vec<f64>)> {
    spec.validate()?;
    let (encoder, model, losses) = gbdt::train(dataset, &sorted_rows(train), &spec.gbdt_params()?, spec.seed)?;
    let model = TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        encoder,
        params: ModelParams::Gbdt(model),
    };
    Ok((model, losses))
}

pub fn train_gbdt(dataset: &Dataset, train: &[usize], spec: &LearnerSpec) -> Result<TrainedModel> {
    train_gbdt_traced(dataset, train, spec).map(|(m, _)| m)
}

pub fn train(dataset: &Dataset, train: &[usize], spec: &LearnerSpec) -> Result<TrainedModel> {
    match spec.kind {
        LearnerKind::Logreg => train_logreg(dataset, train, spec),
        LearnerKind::Gbdt => train_gbdt(dataset, train, spec),
    }
}

impl TrainedModel {
    pub fn kind(&self) -> LearnerKind {
        self.spec.kind
    }

    pub fn predict_scores(&self, dataset: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
        let m = self.encoder.encode(dataset, indices)?;
        Ok(match &self.params {
            ModelParams::Logreg(p) => p.scores(&m),
            ModelParams::Gbdt(p) => p.scores(&m),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported model format {}", model.format_version)));
        }
        Ok(model)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn predict_scores(model: &TrainedModel, dataset: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
    model.predict_scores(dataset, indices)
}

impl Scorer for TrainedModel {
    fn feature_names(&self) -> Vec<String> {
        self.encoder.columns()
    }

    fn predict_scores(&self, dataset: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
        TrainedModel::predict_scores(self, dataset, indices)
    }

    fn to_json(&self) -> Option<String> {
        Some(TrainedModel::to_json(self))
    }
}

impl Learner for LearnerSpec {
    fn kind(&self) -> LearnerKind {
        self.kind
    }

    fn fit(&self, dataset: &Dataset, train_rows: &[usize]) -> Result<Box<dyn Scorer>> {
        Ok(Box::new(train(dataset, train_rows, self)?))
    }
}
