use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitIndices};
use crate::error::{Error, Result};
use crate::learners::{train, LearnerKind, LearnerSpec};
use crate::metrics::auc;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamScale {
    /// Uniform over the integers of `[lo, hi]`.
    Int,
    Uniform,
    LogUniform,
}

/// `(key, lo, hi, scale)` for every tuned hyperparameter, in sampling order.
pub fn search_space(kind: LearnerKind) -> &'static [(&'static str, f64, f64, ParamScale)] {
    use ParamScale::*;
    match kind {
        LearnerKind::Logreg => &[("C", 1e-4, 1e4, LogUniform)],
        LearnerKind::Gbdt => &[
            ("max_depth", 2.0, 7.0, Int),
            ("n_estimators", 100.0, 2000.0, Int),
            ("min_child_weight", 10.0, 100.0, Int),
            ("max_delta_step", 0.0, 10.0, Int),
            ("subsample", 0.5, 1.0, Uniform),
            ("learning_rate", 0.01, 0.5, Uniform),
            ("colsample_bylevel", 0.5, 1.0, Uniform),
            ("colsample_bytree", 0.3, 1.0, Uniform),
            ("gamma", 0.0, 5.0, Uniform),
            ("reg_alpha", 0.5, 10.0, Uniform),
            ("reg_lambda", 2.0, 20.0, Uniform),
        ],
    }
}

pub fn sample_params(kind: LearnerKind, rng: &mut impl Rng) -> BTreeMap<String, f64> {
    search_space(kind)
        .iter()
        .map(|&(key, lo, hi, scale)| {
            let v = match scale {
                ParamScale::Int => rng.gen_range(lo as i64..=hi as i64) as f64,
                ParamScale::Uniform => rng.gen_range(lo..=hi),
                ParamScale::LogUniform => rng.gen_range(lo.ln()..=hi.ln()).exp().clamp(lo, hi),
            };
            (key.to_string(), v)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpoOptions {
    /// Consecutive trials without a meaningful gain before stopping.
    pub patience: usize,
    pub min_improvement: f64,
}

impl Default for HpoOptions {
    fn default() -> Self {
        Self {
            patience: 50,
            min_improvement: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: BTreeMap<String, f64>,
    /// Validation AUC, absent when training failed.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoResult {
    pub kind: LearnerKind,
    pub best_params: BTreeMap<String, f64>,
    pub best_score: f64,
    pub trials: Vec<Trial>,
    pub stopped_early: bool,
}

impl HpoResult {
    pub fn best_spec(&self, seed: u64) -> LearnerSpec {
        LearnerSpec {
            kind: self.kind,
            hyperparams: self.best_params.clone(),
            seed,
        }
    }
}

/// Random search maximizing validation AUC; trials run in sequence.
pub fn hpo_search(
    kind: LearnerKind,
    dataset: &Dataset,
    split: &SplitIndices,
    budget: usize,
    seed: u64,
    options: HpoOptions,
) -> Result<HpoResult> {
    if budget == 0 {
        return Err(Error::LearnerSpec("hpo budget must be at least 1".into()));
    }
    let mut rng = seed::rng(seed::derive_seed(seed, &["hpo".into(), kind.as_str().into()]));
    let val_labels: Vec<u8> = split.val.iter().map(|&r| dataset.labels()[r]).collect();
    let mut trials = Vec::new();
    let mut best: Option<(f64, BTreeMap<String, f64>)> = None;
    let mut stale = 0;
    let mut stopped_early = false;
    for index in 0..budget {
        let params = sample_params(kind, &mut rng);
        let spec = LearnerSpec {
            kind,
            hyperparams: params.clone(),
            seed,
        };
        let outcome = train(dataset, &split.train, &spec)
            .and_then(|m| m.predict_scores(dataset, &split.val))
            .and_then(|s| auc(&s, &val_labels));
        let (score, error) = match outcome {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        };
        trials.push(Trial {
            index,
            params: params.clone(),
            score,
            error,
        });
        let current = best.as_ref().map(|b| b.0);
        match (score, current) {
            (Some(s), None) => {
                best = Some((s, params));
                stale = 0;
            }
            (Some(s), Some(b)) => {
                stale = if s > b + options.min_improvement { 0 } else { stale + 1 };
                if s > b {
                    best = Some((s, params));
                }
            }
            (None, _) => stale += 1,
        }
        if stale >= options.patience && index + 1 < budget {
            stopped_early = true;
            break;
        }
    }
    let (best_score, best_params) =
        best.ok_or_else(|| Error::Training("every hpo trial failed".into()))?;
    Ok(HpoResult {
        kind,
        best_params,
        best_score,
        trials,
        stopped_early,
    })
}
