//! The `transfer` command: reuse exported programs on another dataset.

use std::collections::BTreeMap;
use std::path::Path;

use featloop_core::data::{augment, stratified_split};
use featloop_core::dsl::TransformationFile;
use featloop_core::engine::import_transformations;
use featloop_core::learners::{Learner, LearnerKind, Scorer};
use featloop_core::metrics::{aggregate, auc, evaluate, youden_threshold, AggregateReport};
use featloop_core::{Dataset, Error, EvalReport, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::output::write_json;

/// Raw versus transferred-feature training on the target data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub task: String,
    pub learner: LearnerKind,
    pub n_splits: usize,
    pub transformations: Vec<String>,
    pub raw_validation: Vec<f64>,
    pub transferred_validation: Vec<f64>,
    pub raw: AggregateReport,
    pub transferred: AggregateReport,
    pub auc_improvement_pct: f64,
    pub f1_improvement_pct: f64,
}

/// Old reference name to new, read from a flat TOML table of strings.
pub fn load_name_map(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}

/// Validation AUC, and test metrics at the validation Youden threshold.
pub fn score_split(model: &dyn Scorer, d: &Dataset, val: &[usize], test: &[usize]) -> Result<(f64, EvalReport)> {
    let labels = |rows: &[usize]| rows.iter().map(|&r| d.labels()[r]).collect::<Vec<u8>>();
    let val_scores = model.predict_scores(d, val)?;
    let val_labels = labels(val);
    let threshold = youden_threshold(&val_scores, &val_labels)?;
    let report = evaluate(&model.predict_scores(d, test)?, &labels(test), threshold)?;
    Ok((auc(&val_scores, &val_labels)?, report))
}

pub fn run_transfer(
    config: &Config,
    export: &TransformationFile,
    target: &Dataset,
    name_map: &BTreeMap<String, String>,
    out: &Path,
) -> Result<TransferReport> {
    config.check()?;
    let per_split: Vec<((f64, EvalReport), (f64, EvalReport))> = (0..config.n_splits)
        .into_par_iter()
        .map(|i| {
            let split = stratified_split(target, config.fractions(), config.split_seed(i))?;
            let learner = config.learner_spec(i);
            let raw_model = learner.fit(target, &split.train)?;
            let raw = score_split(raw_model.as_ref(), target, &split.val, &split.test)?;
            let sigma = import_transformations(export, target, &split.train, name_map)?;
            let augmented = augment(target, &sigma)?;
            let model = learner.fit(&augmented, &split.train)?;
            let transferred = score_split(model.as_ref(), &augmented, &split.val, &split.test)?;
            Ok((raw, transferred))
        })
        .collect::<Result<_>>()?;
    let raw = aggregate(&per_split.iter().map(|p| p.0 .1).collect::<Vec<_>>())?;
    let transferred = aggregate(&per_split.iter().map(|p| p.1 .1).collect::<Vec<_>>())?;
    let (auc_improvement_pct, f1_improvement_pct) = transferred.improvement_over(&raw);
    let report = TransferReport {
        task: config.task.clone(),
        learner: config.learner,
        n_splits: config.n_splits,
        transformations: export.transformations.iter().map(|t| t.name.clone()).collect(),
        raw_validation: per_split.iter().map(|p| p.0 .0).collect(),
        transferred_validation: per_split.iter().map(|p| p.1 .0).collect(),
        raw,
        transferred,
        auc_improvement_pct,
        f1_improvement_pct,
    };
    write_json(&out.join("transfer.json"), &report)?;
    Ok(report)
}

pub fn render(r: &TransferReport) -> String {
    format!(
        "transformations: {}\nraw: auc {:.4}  f1 {:.4}\ntransferred: auc {:.4}  f1 {:.4}\nimprovement: auc {:+.2}%  f1 {:+.2}%\n",
        r.transformations.join(", "),
        r.raw.auc.mean,
        r.raw.f1.mean,
        r.transferred.auc.mean,
        r.transferred.f1.mean,
        r.auc_improvement_pct,
        r.f1_improvement_pct
    )
}
