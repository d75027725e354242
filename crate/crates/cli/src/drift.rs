//! The `drift` command: a model frozen before a cutoff versus per-period retraining.

use std::path::Path;

use featloop_core::data::{augment, stratified_split, Column};
use featloop_core::engine::{self, GuardedSplit};
use featloop_core::explain::PermutationExplainer;
use featloop_core::learners::Learner;
use featloop_core::metrics::auc;
use featloop_core::{Dataset, Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::output::{num, write_csv, write_json};
use crate::run::split_snapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRow {
    pub period: f64,
    pub n_rows: usize,
    /// Model trained once before the cutoff, with discovered features.
    pub frozen_auc: f64,
    /// Model retrained on all earlier rows, original columns only.
    pub retrain_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub task: String,
    pub column: String,
    pub cutoff: f64,
    pub accepted: Vec<String>,
    pub periods: Vec<PeriodRow>,
    /// Periods where the frozen model scores at least as well.
    pub frozen_wins: usize,
}

/// Feature discovery on rows ordered before `cutoff`, then per-period scoring.
///
/// The ordering column is dropped from the features. Writes the pre-cutoff
/// run directory under `frozen/`, plus `drift.json` and `drift.csv`.
pub fn run_drift(config: &Config, dataset: &Dataset, column: &str, cutoff: f64, out: &Path) -> Result<DriftReport> {
    config.check()?;
    let order: Vec<f64> = match dataset.column(column) {
        Some(Column::Numeric(v)) => v
            .iter()
            .enumerate()
            .map(|(r, x)| x.ok_or_else(|| Error::Data(format!("ordering column `{column}` is missing at row {r}"))))
            .collect::<Result<_>>()?,
        Some(_) => return Err(Error::Config(format!("ordering column `{column}` is not numeric"))),
        None => return Err(Error::Config(format!("ordering column `{column}` not found"))),
    };
    let base = dataset.without_column(column)?;
    let rows_where = |keep: &dyn Fn(f64) -> bool| -> Vec<usize> { (0..order.len()).filter(|&r| keep(order[r])).collect() };
    let pre_rows = rows_where(&|v| v < cutoff);
    let mut periods: Vec<f64> = order.iter().copied().filter(|&v| v >= cutoff).collect();
    periods.sort_by(f64::total_cmp);
    periods.dedup();
    if pre_rows.is_empty() || periods.is_empty() {
        return Err(Error::Data(format!("cutoff {cutoff} leaves no rows on one side")));
    }

    let pre = base.select_rows(&pre_rows);
    let snapshot = split_snapshot(config, 0, None)?;
    let split = GuardedSplit::new(stratified_split(&pre, config.fractions(), snapshot.split_seed)?);
    let explainer = PermutationExplainer {
        repeats: snapshot.explainer_repeats,
    };
    let proposer = snapshot.proposer.build();
    let frozen = engine::run(&snapshot.engine, &pre, &split, &snapshot.learner, &explainer, proposer.as_ref())?;
    engine::write_run_dir(&out.join("frozen"), &snapshot, &frozen)?;
    let augmented = augment(&base, &frozen.sigma)?;

    let rows: Vec<PeriodRow> = periods
        .par_iter()
        .map(|&p| {
            let at = rows_where(&|v| v == p);
            let labels: Vec<u8> = at.iter().map(|&r| base.labels()[r]).collect();
            let frozen_auc = auc(&frozen.model.predict_scores(&augmented, &at)?, &labels)?;
            let retrained = snapshot.learner.fit(&base, &rows_where(&|v| v < p))?;
            let retrain_auc = auc(&retrained.predict_scores(&base, &at)?, &labels)?;
            Ok(PeriodRow {
                period: p,
                n_rows: at.len(),
                frozen_auc,
                retrain_auc,
            })
        })
        .collect::<Result<_>>()?;
    let report = DriftReport {
        task: config.task.clone(),
        column: column.to_string(),
        cutoff,
        accepted: frozen.sigma.names().into_iter().map(String::from).collect(),
        frozen_wins: rows.iter().filter(|r| r.frozen_auc >= r.retrain_auc).count(),
        periods: rows,
    };
    write_json(&out.join("drift.json"), &report)?;
    let series: Vec<Vec<String>> = report
        .periods
        .iter()
        .map(|r| vec![num(Some(r.period)), r.n_rows.to_string(), num(Some(r.frozen_auc)), num(Some(r.retrain_auc))])
        .collect();
    write_csv(&out.join("drift.csv"), &["period", "n_rows", "frozen_auc", "retrain_auc"], &series)?;
    Ok(report)
}

pub fn render(r: &DriftReport) -> String {
    let mut out = format!(
        "ordering column: {} (cutoff {})\naccepted before cutoff: {}\nperiod  rows  frozen  retrain\n",
        r.column,
        r.cutoff,
        if r.accepted.is_empty() { "-".into() } else { r.accepted.join(", ") }
    );
    for p in &r.periods {
        out += &format!("{:>6}  {:>4}  {:.4}  {:.4}\n", p.period, p.n_rows, p.frozen_auc, p.retrain_auc);
    }
    out += &format!("frozen at least as good in {} of {} periods\n", r.frozen_wins, r.periods.len());
    out
}
