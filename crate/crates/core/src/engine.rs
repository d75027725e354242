//! The iterative feature-discovery loop.
//!
//! Each iteration samples islands from the current importance, asks the
//! proposer for one program per island (with retries), scores every valid
//! candidate on validation, and merges only the best one when it clears the
//! acceptance rule. The test split is read once, after the last iteration.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{feature_groups, Column, Dataset, FeatureGroup, SplitIndices};
use crate::dsl::{fit, parse, validate, FittedTransformation, Provenance, TransformationFile, TransformationSet};
use crate::error::{Error, Result};
use crate::explain::{importance_report, Explainer, ImportanceVector};
use crate::islands::{sample_islands, Island};
use crate::learners::{Learner, Scorer};
use crate::metrics::{auc, evaluate, youden_threshold, EvalReport};
use crate::proposer::{build_prompt, MemoryBank, Outcome, PromptOptions, ProposalRequest, Proposer, RejectReason};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptMode {
    /// Accept when the candidate beats the baseline by at least beta.
    #[default]
    RequireImprovement,
    /// Accept when the candidate is no worse than the baseline minus beta.
    AllowSlack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Auc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IslandSize {
    /// At most this many groups; capped by the number of groups available.
    Fixed(usize),
    /// Every group in one island.
    AllGroups,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub iterations: usize,
    pub islands: usize,
    pub island_size: IslandSize,
    pub beta: f64,
    pub acceptance_mode: AcceptMode,
    pub metric: Metric,
    /// Proposal attempts per island and iteration.
    pub retries: usize,
    pub seed: u64,
    /// Sample islands uniformly instead of by importance.
    pub uniform_importance: bool,
    pub prompt: PromptOptions,
    pub task_description: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            islands: 2,
            island_size: IslandSize::Fixed(3),
            beta: 0.01,
            acceptance_mode: AcceptMode::RequireImprovement,
            metric: Metric::Auc,
            retries: 3,
            seed: 0,
            uniform_importance: false,
            prompt: PromptOptions::default(),
            task_description: String::new(),
        }
    }
}

impl EngineConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.iterations == 0 || self.islands == 0 || self.retries == 0 {
            return bad("iterations, islands and retries must be at least 1");
        }
        if self.island_size == IslandSize::Fixed(0) {
            return bad("island_size must be at least 1");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be a nonnegative number");
        }
        Ok(())
    }
}

pub fn accept_rule(new: f64, base: f64, beta: f64, mode: AcceptMode) -> bool {
    match mode {
        AcceptMode::RequireImprovement => new >= base + beta,
        AcceptMode::AllowSlack => new >= base - beta,
    }
}

/// Train/validation indices plus a test split that counts its reads.
#[derive(Debug)]
pub struct GuardedSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    test: Vec<usize>,
    test_reads: AtomicUsize,
}

impl GuardedSplit {
    pub fn new(split: SplitIndices) -> Self {
        Self {
            train: split.train,
            val: split.val,
            test: split.test,
            test_reads: AtomicUsize::new(0),
        }
    }

    pub fn test(&self) -> &[usize] {
        self.test_reads.fetch_add(1, Ordering::SeqCst);
        &self.test
    }

    pub fn test_reads(&self) -> usize {
        self.test_reads.load(Ordering::SeqCst)
    }
}

pub fn validation_metric(model: &dyn Scorer, dataset: &Dataset, val: &[usize]) -> Result<f64> {
    let labels: Vec<u8> = val.iter().map(|&r| dataset.labels()[r]).collect();
    auc(&model.predict_scores(dataset, val)?, &labels)
}

pub enum CandidateResult {
    Invalid {
        reason: String,
    },
    Valid {
        fitted: FittedTransformation,
        augmented: Dataset,
        model: Box<dyn Scorer>,
        metric: f64,
    },
}

/// Parses, fits on train, checks validity, then trains a fresh learner on the
/// augmented data and scores it on validation. Every failure is an `Invalid` result.
pub fn evaluate_candidate(
    text: &str,
    dataset: &Dataset,
    train: &[usize],
    val: &[usize],
    learner: &dyn Learner,
) -> CandidateResult {
    let invalid = |reason: String| CandidateResult::Invalid { reason };
    let program = match parse(text) {
        Ok(p) => p,
        Err(e) => return invalid(format!("parse: {e}")),
    };
    if dataset.schema().column(program.name()).is_some() {
        return invalid(format!("name_collision: `{}` already exists", program.name()));
    }
    let fitted = match fit(&program, dataset, train) {
        Ok(f) => f,
        Err(e) => return invalid(format!("fit: {e}")),
    };
    let report = validate(&fitted, dataset, train);
    if !report.valid {
        return invalid(report.reason.as_str().to_string());
    }
    let augmented = match fitted
        .apply(dataset)
        .and_then(|v| dataset.with_column(fitted.output_schema(), Column::Numeric(v)))
    {
        Ok(d) => d,
        Err(e) => return invalid(format!("augment: {e}")),
    };
    let model = match learner.fit(&augmented, train) {
        Ok(m) => m,
        Err(e) => return invalid(format!("training: {e}")),
    };
    match validation_metric(model.as_ref(), &augmented, val) {
        Ok(metric) => CandidateResult::Valid {
            fitted,
            augmented,
            model,
            metric,
        },
        Err(e) => invalid(format!("metric: {e}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptStatus {
    Valid,
    Invalid,
    GenerationFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub attempt: usize,
    pub program: Option<String>,
    pub status: AttemptStatus,
    pub detail: Option<String>,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandLog {
    pub index: usize,
    pub groups: Vec<String>,
    pub attempts: Vec<AttemptLog>,
    /// Validation metric of this island's valid candidate.
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub baseline_before: f64,
    pub islands: Vec<IslandLog>,
    pub winner: Option<usize>,
    pub winner_program: Option<String>,
    pub winner_metric: Option<f64>,
    pub accepted: bool,
    pub baseline_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial_validation: f64,
    pub iterations: Vec<IterationLog>,
}

pub struct EngineResult {
    pub sigma: TransformationSet,
    /// Original data with the accepted columns appended.
    pub augmented: Dataset,
    pub model: Arc<dyn Scorer>,
    pub trajectory: Trajectory,
    pub memory: MemoryBank,
    /// Importance used at the start of each iteration, then the final one.
    pub importance_snapshots: Vec<ImportanceVector>,
    pub proposer_id: String,
    pub baseline_validation: f64,
    pub final_validation: f64,
    /// Test metrics of the model trained without generated features.
    pub baseline_test: EvalReport,
    pub test: EvalReport,
}

impl EngineResult {
    pub fn final_importance(&self) -> &ImportanceVector {
        self.importance_snapshots.last().expect("at least one snapshot")
    }
}

struct Candidate {
    island: usize,
    program: String,
    fitted: FittedTransformation,
    augmented: Dataset,
    model: Box<dyn Scorer>,
    metric: f64,
}

struct IslandOutcome {
    log: IslandLog,
    scratch: MemoryBank,
    candidate: Option<Candidate>,
}

struct IterationContext<'a> {
    config: &'a EngineConfig,
    dataset: &'a Dataset,
    split: &'a GuardedSplit,
    learner: &'a dyn Learner,
    proposer: &'a dyn Proposer,
    importance: &'a ImportanceVector,
    memory: &'a MemoryBank,
    iteration: usize,
}

fn run_island(ctx: &IterationContext<'_>, island: &Island) -> IslandOutcome {
    let kind = ctx.learner.kind();
    let schema = ctx.dataset.schema();
    let mut scratch = MemoryBank::new();
    let mut attempts = Vec::new();
    let mut candidate = None;
    for attempt in 0..ctx.config.retries {
        let memory = ctx.memory.merged(&scratch);
        let prompt = build_prompt(
            island,
            ctx.importance,
            &memory,
            kind,
            &ctx.config.task_description,
            schema,
            &ctx.config.prompt,
        );
        let request = ProposalRequest {
            prompt: &prompt,
            island,
            memory: &memory,
            learner_kind: kind,
            schema,
        };
        let text = match ctx.proposer.propose(&request) {
            Ok(t) => t.trim().to_string(),
            Err(e) => {
                let exhausted = matches!(e, Error::IslandExhausted);
                attempts.push(AttemptLog {
                    attempt,
                    program: None,
                    status: AttemptStatus::GenerationFailed,
                    detail: Some(e.to_string()),
                    metric: None,
                });
                if exhausted {
                    break;
                }
                continue;
            }
        };
        match evaluate_candidate(&text, ctx.dataset, &ctx.split.train, &ctx.split.val, ctx.learner) {
            CandidateResult::Invalid { reason } => {
                scratch.record(
                    &text,
                    Outcome::Rejected {
                        reason: RejectReason::Invalid,
                        detail: Some(reason.clone()),
                        delta: None,
                    },
                    ctx.iteration,
                    island.index,
                );
                attempts.push(AttemptLog {
                    attempt,
                    program: Some(text),
                    status: AttemptStatus::Invalid,
                    detail: Some(reason),
                    metric: None,
                });
            }
            CandidateResult::Valid {
                fitted,
                augmented,
                model,
                metric,
            } => {
                attempts.push(AttemptLog {
                    attempt,
                    program: Some(text.clone()),
                    status: AttemptStatus::Valid,
                    detail: None,
                    metric: Some(metric),
                });
                candidate = Some(Candidate {
                    island: island.index,
                    program: text,
                    fitted,
                    augmented,
                    model,
                    metric,
                });
                break;
            }
        }
    }
    IslandOutcome {
        log: IslandLog {
            index: island.index,
            groups: island.group_ids().into_iter().map(String::from).collect(),
            attempts,
            metric: candidate.as_ref().map(|c| c.metric),
        },
        scratch,
        candidate,
    }
}

fn explain_seed(base: u64, iteration: usize) -> u64 {
    seed::derive_seed(base, &["explain".into(), iteration.into()])
}

/// The islands of iteration `t`. The island size is capped by the group count;
/// `uniform_importance` replaces the weights by a uniform vector.
pub fn iteration_islands(
    config: &EngineConfig,
    importance: &ImportanceVector,
    groups: &[FeatureGroup],
    t: usize,
) -> Result<Vec<Island>> {
    let m = match config.island_size {
        IslandSize::Fixed(m) => m.min(groups.len()),
        IslandSize::AllGroups => groups.len(),
    };
    let uniform;
    let weights = if config.uniform_importance {
        uniform = ImportanceVector::uniform(groups);
        &uniform
    } else {
        importance
    };
    let mut islands = sample_islands(weights, groups, config.islands, m, seed::derive_seed(config.seed, &[t.into()]))?;
    for island in &mut islands {
        island.iteration = t;
    }
    Ok(islands)
}

/// Runs the loop to completion and evaluates the final model once on test.
pub fn run(
    config: &EngineConfig,
    dataset: &Dataset,
    split: &GuardedSplit,
    learner: &dyn Learner,
    explainer: &dyn Explainer,
    proposer: &dyn Proposer,
) -> Result<EngineResult> {
    config.check()?;
    let baseline_model: Arc<dyn Scorer> = Arc::from(learner.fit(dataset, &split.train)?);
    let initial_validation = validation_metric(baseline_model.as_ref(), dataset, &split.val)?;
    let mut importance = explainer.explain(
        baseline_model.as_ref(),
        dataset,
        &split.val,
        &feature_groups(dataset.schema()),
        explain_seed(config.seed, 0),
    )?;

    let mut sigma = TransformationSet::new();
    let mut augmented = dataset.clone();
    let mut model = baseline_model.clone();
    let mut base = initial_validation;
    let mut memory = MemoryBank::new();
    let mut snapshots = Vec::new();
    let mut logs = Vec::new();

    for t in 1..=config.iterations {
        snapshots.push(importance.clone());
        let islands = iteration_islands(config, &importance, &feature_groups(augmented.schema()), t)?;
        let ctx = IterationContext {
            config,
            dataset: &augmented,
            split,
            learner,
            proposer,
            importance: &importance,
            memory: &memory,
            iteration: t,
        };
        let outcomes: Vec<IslandOutcome> = islands.par_iter().map(|i| run_island(&ctx, i)).collect();

        let mut island_logs = Vec::new();
        let mut candidates = Vec::new();
        for o in outcomes {
            memory = memory.merged(&o.scratch);
            island_logs.push(o.log);
            candidates.extend(o.candidate);
        }
        // ties keep the lower island index
        let winner = candidates
            .iter()
            .enumerate()
            .fold(None::<usize>, |best, (i, c)| match best {
                Some(b) if candidates[b].metric >= c.metric => Some(b),
                _ => Some(i),
            });
        let accepted = winner.is_some_and(|w| accept_rule(candidates[w].metric, base, config.beta, config.acceptance_mode));
        let before = base;
        let (winner_island, winner_program, winner_metric) = match winner {
            Some(w) => (Some(candidates[w].island), Some(candidates[w].program.clone()), Some(candidates[w].metric)),
            None => (None, None, None),
        };
        let mut chosen = None;
        for (i, c) in candidates.into_iter().enumerate() {
            if accepted && Some(i) == winner {
                memory.record(&c.program, Outcome::Accepted { gain: c.metric - before }, t, c.island);
                chosen = Some(c);
            } else {
                memory.record(
                    &c.program,
                    Outcome::Rejected {
                        reason: RejectReason::NoImprovement,
                        detail: None,
                        delta: Some(c.metric - before),
                    },
                    t,
                    c.island,
                );
            }
        }
        if let Some(c) = chosen {
            sigma.push(c.fitted.with_provenance(Provenance {
                iteration: t,
                island: c.island,
                proposer: proposer.id(),
            }));
            augmented = c.augmented;
            base = c.metric;
            importance = explainer.explain(
                c.model.as_ref(),
                &augmented,
                &split.val,
                &feature_groups(augmented.schema()),
                explain_seed(config.seed, t),
            )?;
            model = Arc::from(c.model);
        }
        logs.push(IterationLog {
            iteration: t,
            baseline_before: before,
            islands: island_logs,
            winner: winner_island,
            winner_program,
            winner_metric,
            accepted,
            baseline_after: base,
        });
    }
    snapshots.push(importance);

    let val_labels: Vec<u8> = split.val.iter().map(|&r| dataset.labels()[r]).collect();
    let threshold = youden_threshold(&model.predict_scores(&augmented, &split.val)?, &val_labels)?;
    let baseline_threshold = youden_threshold(&baseline_model.predict_scores(dataset, &split.val)?, &val_labels)?;

    let test = split.test();
    let test_labels: Vec<u8> = test.iter().map(|&r| dataset.labels()[r]).collect();
    let test_report = evaluate(&model.predict_scores(&augmented, test)?, &test_labels, threshold)?;
    let baseline_test = evaluate(&baseline_model.predict_scores(dataset, test)?, &test_labels, baseline_threshold)?;

    Ok(EngineResult {
        sigma,
        augmented,
        model,
        trajectory: Trajectory {
            initial_validation,
            iterations: logs,
        },
        memory,
        importance_snapshots: snapshots,
        proposer_id: proposer.id(),
        baseline_validation: initial_validation,
        final_validation: base,
        baseline_test,
        test: test_report,
    })
}

/// Writes program texts and provenance without fitted statistics.
pub fn export_transformations(sigma: &TransformationSet, path: impl AsRef<Path>) -> Result<()> {
    sigma.to_file(false).write(path)
}

/// Re-parses exported programs, renames references through `name_map`, and
/// refits every statistic on `train` rows of `dataset`. Later programs may
/// reference earlier outputs.
pub fn import_transformations(
    file: &TransformationFile,
    dataset: &Dataset,
    train: &[usize],
    name_map: &BTreeMap<String, String>,
) -> Result<TransformationSet> {
    let mut out = TransformationSet::new();
    let mut current = dataset.clone();
    let mut unresolved = BTreeSet::new();
    for rec in &file.transformations {
        let program = rec.parse()?.map_references(&|n| name_map.get(n).cloned());
        let schema = current.schema();
        let missing: Vec<String> = program
            .columns()
            .into_iter()
            .filter(|c| schema.column(c).is_none())
            .chain(program.groups().into_iter().filter(|g| schema.group_members(g).is_empty()))
            .collect();
        if !missing.is_empty() {
            unresolved.extend(missing);
            continue;
        }
        let mut fitted = fit(&program, &current, train)?;
        if let Some(p) = &rec.provenance {
            fitted = fitted.with_provenance(p.clone());
        }
        current = current.with_column(fitted.output_schema(), Column::Numeric(fitted.apply(&current)?))?;
        out.push(fitted);
    }
    if !unresolved.is_empty() {
        return Err(Error::Unresolved(unresolved.into_iter().collect()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub proposer: String,
    pub accepted: Vec<String>,
    pub baseline_validation: f64,
    pub final_validation: f64,
    pub baseline_test: EvalReport,
    pub test: EvalReport,
    /// Share of generated features among the ten most important groups.
    pub top10_generated_fraction: f64,
}

impl RunReport {
    pub fn of(result: &EngineResult) -> RunReport {
        RunReport {
            proposer: result.proposer_id.clone(),
            accepted: result.sigma.names().into_iter().map(String::from).collect(),
            baseline_validation: result.baseline_validation,
            final_validation: result.final_validation,
            baseline_test: result.baseline_test,
            test: result.test,
            top10_generated_fraction: importance_report(result.final_importance(), &result.sigma)
                .top_k_generated_fraction(10),
        }
    }
}

pub const RUN_FILES: [&str; 7] = [
    "config.json",
    "trajectory.json",
    "memory.json",
    "transformations.json",
    "export.json",
    "importance_report.json",
    "report.json",
];

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Writes the run directory: config snapshot, trajectory, memory, fitted and
/// exported transformations, per-iteration importance, final model and report.
/// Contents depend only on the inputs, so seeded offline runs are byte-identical.
pub fn write_run_dir(dir: &Path, config: &impl Serialize, result: &EngineResult) -> Result<()> {
    let imp_dir = dir.join("importance");
    std::fs::create_dir_all(&imp_dir).map_err(|e| Error::io(&imp_dir, e))?;
    write_text(&dir.join("config.json"), &pretty(config))?;
    write_text(&dir.join("trajectory.json"), &pretty(&result.trajectory))?;
    write_text(&dir.join("memory.json"), &pretty(&result.memory))?;
    result.sigma.to_file(true).write(dir.join("transformations.json"))?;
    export_transformations(&result.sigma, dir.join("export.json"))?;
    let n = result.importance_snapshots.len();
    for (i, snap) in result.importance_snapshots.iter().enumerate() {
        let name = if i + 1 == n {
            "final.json".to_string()
        } else {
            format!("iteration_{}.json", i + 1)
        };
        write_text(&imp_dir.join(name), &pretty(snap))?;
    }
    write_text(
        &dir.join("importance_report.json"),
        &pretty(&importance_report(result.final_importance(), &result.sigma)),
    )?;
    if let Some(model) = result.model.to_json() {
        write_text(&dir.join("model.json"), &model)?;
    }
    write_text(&dir.join("report.json"), &pretty(&RunReport::of(result)))
}
