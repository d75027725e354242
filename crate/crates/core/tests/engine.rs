mod support;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use featloop_core::data::{augment, feature_groups, stratified_split, Dataset, Schema, SplitIndices};
use featloop_core::dsl::{parse, TransformationFile};
use featloop_core::engine::{
    accept_rule, evaluate_candidate, export_transformations, import_transformations, run, validation_metric,
    write_run_dir, AcceptMode, AttemptStatus, CandidateResult, EngineConfig, EngineResult, GuardedSplit, IslandSize,
};
use featloop_core::explain::PermutationExplainer;
use featloop_core::learners::{Learner, LearnerKind, LearnerSpec, Scorer};
use featloop_core::proposer::OfflineProposer;
use featloop_core::synth::{generate, SynthSpec};
use featloop_core::{Error, Result};
use support::replay::{logged_fixture, Fixed, LoggedLearner, LOGGED_PROGRAM};

#[test]
fn acceptance_rule_cases() {
    assert!(accept_rule(0.758, 0.736, 0.01, AcceptMode::RequireImprovement));
    assert!(!accept_rule(0.736, 0.736, 0.01, AcceptMode::RequireImprovement));
    assert!(accept_rule(0.736 - 0.005, 0.736, 0.01, AcceptMode::AllowSlack));
    assert!(!accept_rule(0.736 - 0.02, 0.736, 0.01, AcceptMode::AllowSlack));
}

/// Counts fits and records every row a learner trains on.
struct Counting {
    inner: LearnerSpec,
    fits: AtomicUsize,
    rows: Mutex<Vec<usize>>,
}

impl Counting {
    fn new(kind: LearnerKind) -> Self {
        Self {
            inner: LearnerSpec::new(kind),
            fits: AtomicUsize::new(0),
            rows: Mutex::new(Vec::new()),
        }
    }
}

impl Learner for Counting {
    fn kind(&self) -> LearnerKind {
        self.inner.kind
    }

    fn fit(&self, dataset: &Dataset, train: &[usize]) -> Result<Box<dyn Scorer>> {
        self.fits.fetch_add(1, Ordering::SeqCst);
        self.rows.lock().unwrap().extend_from_slice(train);
        self.inner.fit(dataset, train)
    }
}

fn interaction(seed: u64) -> (Dataset, SplitIndices) {
    interaction_with(seed, 1)
}

fn interaction_with(seed: u64, categoricals: usize) -> (Dataset, SplitIndices) {
    let (d, _) = generate(&SynthSpec {
        seed,
        n_static_categorical: categoricals,
        ..SynthSpec::default()
    })
    .unwrap();
    let split = stratified_split(&d, (0.6, 0.2, 0.2), seed).unwrap();
    (d, split)
}

#[test]
fn constant_and_colliding_candidates_are_invalid_without_training() {
    let (d, split) = interaction(1);
    let learner = Counting::new(LearnerKind::Logreg);
    let reason = |text: &str| match evaluate_candidate(text, &d, &split.train, &split.val, &learner) {
        CandidateResult::Invalid { reason } => reason,
        CandidateResult::Valid { .. } => panic!("valid: {text}"),
    };
    assert_eq!(reason("feature k = 1 + 0"), "zero_variance");
    assert!(reason("feature num0 = col(num1) * 2").starts_with("name_collision"));
    assert!(reason("feature k = col(nope)").starts_with("fit"));
    assert!(reason("not a program").starts_with("parse"));
    assert_eq!(learner.fits.load(Ordering::SeqCst), 0);
    match evaluate_candidate("feature p = col(num0) * col(num1)", &d, &split.train, &split.val, &learner) {
        CandidateResult::Valid { metric, .. } => assert!(metric > 0.8, "{metric}"),
        CandidateResult::Invalid { reason } => panic!("{reason}"),
    }
}

#[test]
fn logged_acceptance_replay() {
    let (d, split) = logged_fixture();
    let split = GuardedSplit::new(split);
    let config = EngineConfig {
        iterations: 1,
        islands: 1,
        island_size: IslandSize::Fixed(2),
        ..EngineConfig::default()
    };
    let r = run(&config, &d, &split, &LoggedLearner, &PermutationExplainer::default(), &Fixed(LOGGED_PROGRAM)).unwrap();
    let it = &r.trajectory.iterations[0];
    assert_eq!(r.trajectory.initial_validation, 0.736);
    assert_eq!(it.baseline_before, 0.736);
    assert_eq!(it.winner_metric, Some(0.758));
    assert!(it.accepted);
    assert_eq!(it.baseline_after, 0.758);
    assert_eq!(r.sigma.names(), ["age_imd_interaction"]);
    assert_eq!(r.memory.accepted.len(), 1);
    assert!((r.memory.accepted[0].gain - 0.022).abs() < 1e-12);
    assert_eq!(split.test_reads(), 1);

    // the same candidate is rejected when the required margin is larger than the gain
    let strict = EngineConfig { beta: 0.05, ..config };
    let split = GuardedSplit::new(logged_fixture().1);
    let r = run(&strict, &d, &split, &LoggedLearner, &PermutationExplainer::default(), &Fixed(LOGGED_PROGRAM)).unwrap();
    assert!(!r.trajectory.iterations[0].accepted);
    assert!(r.sigma.is_empty());
}

#[test]
fn always_invalid_proposer_leaves_the_baseline() {
    let (d, split) = interaction(2);
    let split = GuardedSplit::new(split);
    let config = EngineConfig {
        iterations: 1,
        ..EngineConfig::default()
    };
    let learner = LearnerSpec::new(LearnerKind::Logreg);
    let r = run(&config, &d, &split, &learner, &PermutationExplainer::default(), &Fixed("feature k = 1 + 0")).unwrap();
    assert!(r.sigma.is_empty());
    assert_eq!(r.test, r.baseline_test);
    assert_eq!(r.final_validation, r.baseline_validation);
    for island in &r.trajectory.iterations[0].islands {
        assert_eq!(island.attempts.len(), 3);
        assert!(island.attempts.iter().all(|a| a.status == AttemptStatus::Invalid));
    }
    assert_eq!(split.test_reads(), 1);
}

fn offline_run(seed: u64, m: usize, categoricals: usize) -> (EngineResult, Dataset, SplitIndices, usize, Vec<usize>) {
    let (d, split) = interaction_with(seed, categoricals);
    let guarded = GuardedSplit::new(split.clone());
    let config = EngineConfig {
        island_size: IslandSize::Fixed(m),
        seed,
        ..EngineConfig::default()
    };
    let learner = Counting::new(LearnerKind::Logreg);
    let r = run(&config, &d, &guarded, &learner, &PermutationExplainer::default(), &OfflineProposer { seed }).unwrap();
    let rows = learner.rows.lock().unwrap().clone();
    (r, d, split, guarded.test_reads(), rows)
}

#[test]
fn planted_interaction_is_found() {
    // the planted pair carries no marginal importance, so the island must hold both numerics
    let (r, d, split, reads, rows) = offline_run(3, 2, 0);
    assert!(!r.sigma.is_empty());
    assert!(r.final_validation >= r.baseline_validation + 0.01);
    assert!(r.test.auc > r.baseline_test.auc + 0.15, "{:?} vs {:?}", r.test, r.baseline_test);

    // test rows are read once and never trained on
    assert_eq!(reads, 1);
    assert!(rows.iter().all(|r| !split.test.contains(r)));

    // retraining on the augmented data from scratch reproduces the final metric
    let aug = augment(&d, &r.sigma).unwrap();
    let model = LearnerSpec::new(LearnerKind::Logreg).fit(&aug, &split.train).unwrap();
    let again = validation_metric(model.as_ref(), &aug, &split.val).unwrap();
    assert!((again - r.final_validation).abs() <= 1e-9);

    // accepted baselines rise by at least beta
    let accepted: Vec<f64> = r
        .trajectory
        .iterations
        .iter()
        .filter(|i| i.accepted)
        .map(|i| i.baseline_after)
        .collect();
    let mut prev = r.baseline_validation;
    for a in accepted {
        assert!(a >= prev + 0.01);
        prev = a;
    }

    // every proposed program is in memory
    for it in &r.trajectory.iterations {
        for island in &it.islands {
            for a in &island.attempts {
                if let Some(p) = &a.program {
                    assert!(r.memory.contains(p), "{p}");
                }
            }
        }
    }
}

#[test]
fn seeded_runs_write_identical_directories() {
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for dir in &dirs {
        let (r, ..) = offline_run(4, 3, 1);
        write_run_dir(dir.path(), &EngineConfig::default(), &r).unwrap();
    }
    let mut files = Vec::new();
    for entry in walk(dirs[0].path()) {
        let rel = entry.strip_prefix(dirs[0].path()).unwrap().to_path_buf();
        let a = std::fs::read(&entry).unwrap();
        let b = std::fs::read(dirs[1].path().join(&rel)).unwrap();
        assert_eq!(a, b, "{}", rel.display());
        files.push(rel);
    }
    assert_eq!(walk(dirs[1].path()).len(), files.len());
    assert!(files.iter().any(|f| f.ends_with("trajectory.json")));
    assert!(files.iter().any(|f| f.ends_with("final.json")));
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn export_import_round_trip_and_mapping() {
    let (r, d, split, ..) = offline_run(5, 3, 1);
    assert!(!r.sigma.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("export.json");
    export_transformations(&r.sigma, &path).unwrap();
    let file = TransformationFile::read(&path).unwrap();
    assert!(file.transformations.iter().all(|t| t.fitted_stats.is_none()));
    let back = import_transformations(&file, &d, &split.train, &BTreeMap::new()).unwrap();
    for (a, b) in r.sigma.iter().zip(back.iter()) {
        assert!(a.program().structurally_eq(b.program()));
        assert_eq!(a.fitted_stats(), b.fitted_stats());
    }

    // renamed target columns
    let renamed_schema = Schema::new(
        d.schema()
            .columns
            .iter()
            .map(|c| {
                let mut c = c.clone();
                if c.name == "num0" {
                    c.name = "heart_rate".into();
                }
                c
            })
            .collect(),
    )
    .unwrap();
    let columns = d.feature_names().iter().map(|n| d.column(n).unwrap().clone()).collect();
    let target = Dataset::from_columns(renamed_schema, columns, d.labels().to_vec()).unwrap();
    let map = BTreeMap::from([("num0".to_string(), "heart_rate".to_string())]);
    let mapped = import_transformations(&file, &target, &split.train, &map).unwrap();
    let first = mapped.iter().next().unwrap();
    assert!(first.program().columns().contains("heart_rate"));
    assert!(!first.program().columns().contains("num0"));
    match import_transformations(&file, &target, &split.train, &BTreeMap::new()) {
        Err(Error::Unresolved(names)) => assert_eq!(names, ["num0"]),
        other => panic!("{:?}", other.map(|s| s.len())),
    }
}

#[test]
fn import_of_unknown_group_is_unresolved() {
    let (d, split) = interaction(6);
    let file = TransformationFile {
        format_version: 1,
        transformations: vec![featloop_core::dsl::TransformationRecord {
            name: "s".into(),
            rationale: String::new(),
            program: parse("feature s = gslope(hr)").unwrap().render_body(),
            fitted_stats: None,
            provenance: None,
        }],
    };
    assert!(matches!(
        import_transformations(&file, &d, &split.train, &BTreeMap::new()),
        Err(Error::Unresolved(n)) if n == ["hr"]
    ));
    let _ = feature_groups(d.schema());
}

