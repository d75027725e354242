//! The `run` and `ablate` commands: the loop over several seeded splits.

use std::path::Path;

use featloop_core::data::stratified_split;
use featloop_core::engine::{self, GuardedSplit, IslandSize, RunReport};
use featloop_core::explain::PermutationExplainer;
use featloop_core::learners::{LearnerKind, LearnerSpec};
use featloop_core::metrics::{aggregate, AggregateReport};
use featloop_core::proposer::ProposerConfig;
use featloop_core::{Dataset, EngineConfig, EngineResult, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::output::{num, write_csv, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Ablation {
    /// Drop the learner-kind guidance block from prompts.
    NoModelAwareness,
    /// One island holding every group.
    NoIslands,
    /// Uniform island sampling and no importance lines in prompts.
    NoImportance,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::NoModelAwareness => "no_model_awareness",
            Ablation::NoIslands => "no_islands",
            Ablation::NoImportance => "no_importance",
        }
    }

    pub fn apply(self, config: &mut EngineConfig) {
        match self {
            Ablation::NoModelAwareness => config.prompt.learner_block = false,
            Ablation::NoIslands => {
                config.islands = 1;
                config.island_size = IslandSize::AllGroups;
            }
            Ablation::NoImportance => {
                config.uniform_importance = true;
                config.prompt.importance = false;
            }
        }
    }
}

/// Everything one split's engine run was configured with.
#[derive(Debug, Clone, Serialize)]
pub struct SplitSnapshot {
    pub split: usize,
    pub split_seed: u64,
    pub engine: EngineConfig,
    pub learner: LearnerSpec,
    pub proposer: ProposerConfig,
    pub explainer_repeats: usize,
}

pub struct SplitRun {
    pub snapshot: SplitSnapshot,
    pub result: EngineResult,
    pub test_reads: usize,
}

/// Aggregate of one `run` or `ablate` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<Ablation>,
    pub learner: LearnerKind,
    pub proposer: String,
    pub n_splits: usize,
    /// Test metrics of the learner on the original columns.
    pub baseline: AggregateReport,
    /// Test metrics after feature discovery.
    pub featloop: AggregateReport,
    pub auc_improvement_pct: f64,
    pub f1_improvement_pct: f64,
    pub accepted: Vec<Vec<String>>,
    pub top10_generated_fraction: Vec<f64>,
    pub test_reads: Vec<usize>,
}

pub struct RunOutcome {
    pub summary: RunSummary,
    pub splits: Vec<SplitRun>,
}

pub fn split_snapshot(config: &Config, i: usize, ablation: Option<Ablation>) -> Result<SplitSnapshot> {
    let mut engine = config.engine_config(i)?;
    if let Some(a) = ablation {
        a.apply(&mut engine);
    }
    Ok(SplitSnapshot {
        split: i,
        split_seed: config.split_seed(i),
        engine,
        learner: config.learner_spec(i),
        proposer: config.proposer_config(i),
        explainer_repeats: config.explainer_repeats,
    })
}

/// Runs the engine on one split of `dataset`.
pub fn run_split(config: &Config, dataset: &Dataset, i: usize, ablation: Option<Ablation>) -> Result<SplitRun> {
    let snapshot = split_snapshot(config, i, ablation)?;
    let split = GuardedSplit::new(stratified_split(dataset, config.fractions(), snapshot.split_seed)?);
    let explainer = PermutationExplainer {
        repeats: snapshot.explainer_repeats,
    };
    let proposer = snapshot.proposer.build();
    let result = engine::run(
        &snapshot.engine,
        dataset,
        &split,
        &snapshot.learner,
        &explainer,
        proposer.as_ref(),
    )?;
    Ok(SplitRun {
        snapshot,
        result,
        test_reads: split.test_reads(),
    })
}

/// Runs every split, writes one run directory per split plus the aggregate.
///
/// Layout: `config.json`, `summary.json`, `trajectory.csv` and `split_{i}/`.
pub fn run_experiment(config: &Config, dataset: &Dataset, out: &Path, ablation: Option<Ablation>) -> Result<RunOutcome> {
    config.check()?;
    let splits: Vec<SplitRun> = (0..config.n_splits)
        .into_par_iter()
        .map(|i| run_split(config, dataset, i, ablation))
        .collect::<Result<_>>()?;

    write_json(&out.join("config.json"), config)?;
    let mut series = Vec::new();
    for s in &splits {
        engine::write_run_dir(&out.join(format!("split_{}", s.snapshot.split)), &s.snapshot, &s.result)?;
        let t = &s.result.trajectory;
        let v0 = num(Some(t.initial_validation));
        series.push(vec![s.snapshot.split.to_string(), "0".into(), v0.clone(), String::new(), String::new(), v0]);
        for it in &t.iterations {
            series.push(vec![
                s.snapshot.split.to_string(),
                it.iteration.to_string(),
                num(Some(it.baseline_before)),
                num(it.winner_metric),
                it.accepted.to_string(),
                num(Some(it.baseline_after)),
            ]);
        }
    }
    write_csv(
        &out.join("trajectory.csv"),
        &["split", "iteration", "baseline_before", "winner_metric", "accepted", "baseline_after"],
        &series,
    )?;

    let summary = summarize(config, &splits, ablation)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(RunOutcome { summary, splits })
}

fn summarize(config: &Config, splits: &[SplitRun], ablation: Option<Ablation>) -> Result<RunSummary> {
    let reports: Vec<RunReport> = splits.iter().map(|s| RunReport::of(&s.result)).collect();
    let baseline = aggregate(&reports.iter().map(|r| r.baseline_test).collect::<Vec<_>>())?;
    let featloop = aggregate(&reports.iter().map(|r| r.test).collect::<Vec<_>>())?;
    let (auc_improvement_pct, f1_improvement_pct) = featloop.improvement_over(&baseline);
    Ok(RunSummary {
        task: config.task.clone(),
        ablation,
        learner: config.learner,
        proposer: reports[0].proposer.clone(),
        n_splits: splits.len(),
        baseline,
        featloop,
        auc_improvement_pct,
        f1_improvement_pct,
        accepted: reports.iter().map(|r| r.accepted.clone()).collect(),
        top10_generated_fraction: reports.iter().map(|r| r.top10_generated_fraction).collect(),
        test_reads: splits.iter().map(|s| s.test_reads).collect(),
    })
}

impl RunSummary {
    pub fn render(&self) -> String {
        let std = |s: Option<f64>| s.map(|v| format!(" ± {v:.4}")).unwrap_or_default();
        let mut out = format!(
            "task: {}\nlearner: {}\nproposer: {}\nsplits: {}\n",
            if self.task.is_empty() { "-" } else { &self.task },
            self.learner.as_str(),
            self.proposer,
            self.n_splits
        );
        if let Some(a) = self.ablation {
            out += &format!("ablation: {}\n", a.name());
        }
        for (name, r) in [("baseline", &self.baseline), ("featloop", &self.featloop)] {
            out += &format!(
                "{name}: auc {:.4}{}  f1 {:.4}{}\n",
                r.auc.mean,
                std(r.auc.std),
                r.f1.mean,
                std(r.f1.std)
            );
        }
        out += &format!(
            "improvement: auc {:+.2}%  f1 {:+.2}%\n",
            self.auc_improvement_pct, self.f1_improvement_pct
        );
        for (i, a) in self.accepted.iter().enumerate() {
            out += &format!("split {i} accepted: {}\n", if a.is_empty() { "-".into() } else { a.join(", ") });
        }
        out
    }
}
