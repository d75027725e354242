//! The `report` command: one comparison table over several run directories.

use std::path::{Path, PathBuf};

use featloop_core::dsl::{TransformationFile, TransformationSet};
use featloop_core::engine::Trajectory;
use featloop_core::explain::{importance_report, ImportanceVector};
use featloop_core::metrics::AggregateReport;
use featloop_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::output::{num, read_json, write_csv, write_json, write_text};
use crate::run::RunSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub task: String,
    pub method: String,
    pub auc_mean: f64,
    pub auc_std: Option<f64>,
    pub f1_mean: f64,
    pub f1_std: Option<f64>,
    /// Relative to the baseline row of the same task; absent on that row.
    pub auc_improvement_pct: Option<f64>,
    pub f1_improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consolidated {
    pub runs: Vec<RunSummary>,
    pub table: Vec<TableRow>,
    /// Per run, per split share of generated features among the ten most important.
    pub top10_generated_fraction: Vec<Vec<f64>>,
}

fn task_name(summary: &RunSummary, dir: &Path) -> String {
    let base = if summary.task.is_empty() {
        dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    } else {
        summary.task.clone()
    };
    match summary.ablation {
        Some(a) => format!("{base} [{}]", a.name()),
        None => base,
    }
}

fn row(task: &str, method: &str, r: &AggregateReport, gain: Option<(f64, f64)>) -> TableRow {
    TableRow {
        task: task.to_string(),
        method: method.to_string(),
        auc_mean: r.auc.mean,
        auc_std: r.auc.std,
        f1_mean: r.f1.mean,
        f1_std: r.f1.std,
        auc_improvement_pct: gain.map(|g| g.0),
        f1_improvement_pct: gain.map(|g| g.1),
    }
}

/// Recomputes the generated share from a split's final importance snapshot.
fn top10_from_snapshot(split_dir: &Path) -> Result<f64> {
    let importance = ImportanceVector::read(split_dir.join("importance").join("final.json"))?;
    let sigma = TransformationSet::from_file(&TransformationFile::read(split_dir.join("transformations.json"))?)?;
    Ok(importance_report(&importance, &sigma).top_k_generated_fraction(10))
}

fn split_dirs(dir: &Path, n: usize) -> Vec<PathBuf> {
    (0..n).map(|i| dir.join(format!("split_{i}"))).collect()
}

/// Writes `report.json`, `table.csv`, `table.md`, `top10.csv` and `trajectory.csv` under `out`.
pub fn run_report(dirs: &[PathBuf], out: &Path) -> Result<(Consolidated, String)> {
    if dirs.is_empty() {
        return Err(Error::Config("report needs at least one run directory".into()));
    }
    let mut runs = Vec::new();
    let mut table = Vec::new();
    let mut top10 = Vec::new();
    let mut top_rows = Vec::new();
    let mut traj_rows = Vec::new();
    for dir in dirs {
        let summary: RunSummary = read_json(&dir.join("summary.json"))?;
        let task = task_name(&summary, dir);
        table.push(row(&task, "baseline", &summary.baseline, None));
        table.push(row(
            &task,
            "featloop",
            &summary.featloop,
            Some((summary.auc_improvement_pct, summary.f1_improvement_pct)),
        ));
        let mut fractions = Vec::new();
        for (i, sd) in split_dirs(dir, summary.n_splits).iter().enumerate() {
            let f = top10_from_snapshot(sd)?;
            top_rows.push(vec![task.clone(), i.to_string(), num(Some(f))]);
            fractions.push(f);
            let t: Trajectory = read_json(&sd.join("trajectory.json"))?;
            for it in &t.iterations {
                traj_rows.push(vec![
                    task.clone(),
                    i.to_string(),
                    it.iteration.to_string(),
                    num(Some(it.baseline_before)),
                    num(it.winner_metric),
                    it.accepted.to_string(),
                    num(Some(it.baseline_after)),
                ]);
            }
        }
        top10.push(fractions);
        runs.push(summary);
    }

    let consolidated = Consolidated {
        runs,
        table,
        top10_generated_fraction: top10,
    };
    write_json(&out.join("report.json"), &consolidated)?;
    let csv_rows: Vec<Vec<String>> = consolidated
        .table
        .iter()
        .map(|r| {
            vec![
                r.task.clone(),
                r.method.clone(),
                num(Some(r.auc_mean)),
                num(r.auc_std),
                num(Some(r.f1_mean)),
                num(r.f1_std),
                num(r.auc_improvement_pct),
                num(r.f1_improvement_pct),
            ]
        })
        .collect();
    write_csv(
        &out.join("table.csv"),
        &["task", "method", "auc_mean", "auc_std", "f1_mean", "f1_std", "auc_improvement_pct", "f1_improvement_pct"],
        &csv_rows,
    )?;
    write_csv(&out.join("top10.csv"), &["task", "split", "generated_fraction"], &top_rows)?;
    write_csv(
        &out.join("trajectory.csv"),
        &["task", "split", "iteration", "baseline_before", "winner_metric", "accepted", "baseline_after"],
        &traj_rows,
    )?;
    let markdown = render_table(&consolidated.table);
    write_text(&out.join("table.md"), &markdown)?;
    Ok((consolidated, markdown))
}

/// Task by method by metric, with the improvement over the baseline in brackets.
pub fn render_table(rows: &[TableRow]) -> String {
    let cell = |mean: f64, std: Option<f64>, gain: Option<f64>| {
        let mut s = format!("{mean:.4}");
        if let Some(sd) = std {
            s += &format!(" ± {sd:.4}");
        }
        if let Some(g) = gain {
            s += &format!(" ({g:+.2}%)");
        }
        s
    };
    let mut out = String::from("| task | method | AUC | F1 |\n|---|---|---|---|\n");
    for r in rows {
        out += &format!(
            "| {} | {} | {} | {} |\n",
            r.task,
            r.method,
            cell(r.auc_mean, r.auc_std, r.auc_improvement_pct),
            cell(r.f1_mean, r.f1_std, r.f1_improvement_pct)
        );
    }
    out
}
