use std::collections::BTreeMap;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::Parser;
use featloop_cli::drift::run_drift;
use featloop_cli::hpo::run_hpo;
use featloop_cli::report::run_report;
use featloop_cli::run::{run_experiment, split_snapshot, Ablation};
use featloop_cli::transfer::run_transfer;
use featloop_cli::{execute, run_synth, Cli, Config};
use featloop_core::data::{feature_groups, stratified_split};
use featloop_core::dsl::TransformationFile;
use featloop_core::engine::{self, iteration_islands, GuardedSplit};
use featloop_core::explain::{ImportanceVector, PermutationExplainer};
use featloop_core::islands::draw_without_replacement;
use featloop_core::learners::{search_space, LearnerKind};
use featloop_core::proposer::{OfflineProposer, PromptBundle, ProposalRequest, Proposer};
use featloop_core::seed;
use featloop_core::synth::{Planted, SynthSpec};
use featloop_core::{Dataset, Error, Result};

fn synth(dir: &Path, spec: SynthSpec) -> (Dataset, Config) {
    let d = run_synth(&spec, dir).unwrap();
    let cfg = Config {
        data: Some(dir.join("data.csv")),
        schema: Some(dir.join("schema.json")),
        ..Config::current()
    };
    (d, cfg)
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn seeded_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, cfg) = synth(&tmp.path().join("data"), SynthSpec::default());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let ra = run_experiment(&cfg, &d, &a, None).unwrap();
    run_experiment(&cfg, &d, &b, None).unwrap();
    let (fa, fb) = (files_under(&a), files_under(&b));
    assert!(fa.len() > 20);
    assert_eq!(fa, fb);
    assert_eq!(ra.summary.test_reads, [1, 1, 1]);
    assert!(ra.summary.baseline.auc.std.is_some());
}

#[test]
fn single_split_has_no_std() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, mut cfg) = synth(&tmp.path().join("data"), SynthSpec::default());
    cfg.n_splits = 1;
    let out = run_experiment(&cfg, &d, &tmp.path().join("run"), None).unwrap();
    assert!(out.summary.featloop.auc.std.is_none());
    let text = std::fs::read_to_string(tmp.path().join("run/summary.json")).unwrap();
    assert!(!text.contains("\"std\""));
    assert!(text.contains("\"mean\""));
}

#[test]
fn offline_backend_never_connects() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let (d, mut cfg) = synth(&tmp.path().join("data"), SynthSpec::default());
    cfg.endpoint = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    cfg.n_splits = 1;
    run_experiment(&cfg, &d, &tmp.path().join("run"), None).unwrap();
    assert_eq!(listener.accept().unwrap_err().kind(), std::io::ErrorKind::WouldBlock);
}

#[test]
fn command_line_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    let run = |args: &[&str]| execute(&Cli::try_parse_from([&["featloop"], args].concat()).unwrap());
    assert!(run(&["synth", "--out", &p("syn"), "--seed", "3"]).unwrap().contains("4000 rows"));
    std::fs::write(
        tmp.path().join("c.toml"),
        "config_version = 1\ntask = \"demo\"\ndata = \"syn/data.csv\"\nschema = \"syn/schema.json\"\nn_splits = 2\n",
    )
    .unwrap();
    let text = run(&["run", "--config", &p("c.toml"), "--out", &p("run")]).unwrap();
    assert!(text.contains("task: demo"), "{text}");
    let table = run(&["report", &p("run"), "--out", &p("rep")]).unwrap();
    assert!(table.contains("| demo | featloop |"), "{table}");

    std::fs::write(tmp.path().join("bad.toml"), "config_version = 1\nislands_per_iteration = 4\n").unwrap();
    let err = run(&["run", "--config", &p("bad.toml"), "--out", &p("x")]).unwrap_err();
    assert!(err.to_string().contains("islands_per_iteration"), "{err}");
    assert!(Cli::try_parse_from(["featloop", "run", "--api-key", "k"]).is_err());
    assert!(Cli::try_parse_from(["featloop", "run", "--backend", "carrier_pigeon"]).is_err());
    let err = run(&["run", "--out", &p("y")]).unwrap_err();
    assert!(err.to_string().contains("data"), "{err}");
}

/// Offline proposer that keeps every prompt it is shown.
struct Recording {
    inner: OfflineProposer,
    seen: Mutex<Vec<(Vec<String>, PromptBundle)>>,
}

impl Proposer for Recording {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn propose(&self, r: &ProposalRequest<'_>) -> Result<String> {
        let ids = r.island.group_ids().into_iter().map(String::from).collect();
        self.seen.lock().unwrap().push((ids, r.prompt.clone()));
        self.inner.propose(r)
    }
}

fn prompts_for(cfg: &Config, d: &Dataset, ablation: Option<Ablation>) -> Vec<(Vec<String>, PromptBundle)> {
    let snap = split_snapshot(cfg, 0, ablation).unwrap();
    let split = GuardedSplit::new(stratified_split(d, cfg.fractions(), snap.split_seed).unwrap());
    let rec = Recording {
        inner: OfflineProposer { seed: 0 },
        seen: Mutex::new(Vec::new()),
    };
    engine::run(&snap.engine, d, &split, &snap.learner, &PermutationExplainer::default(), &rec).unwrap();
    rec.seen.into_inner().unwrap()
}

#[test]
fn ablations_change_prompts_and_sampling() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, mut cfg) = synth(
        &tmp.path().join("data"),
        SynthSpec {
            n_static_numeric: 4,
            n_temporal_groups: 1,
            n_rows: 1500,
            ..SynthSpec::default()
        },
    );
    cfg.iterations = 2;
    let n_groups = feature_groups(d.schema()).len();
    let full = prompts_for(&cfg, &d, None);
    assert!(full.iter().all(|(_, p)| p.learner_block.is_some() && p.island_listing.contains("importance: ")));

    let no_aware = prompts_for(&cfg, &d, Some(Ablation::NoModelAwareness));
    assert!(no_aware.iter().all(|(_, p)| p.learner_block.is_none() && p.island_listing.contains("importance: ")));

    let no_imp = prompts_for(&cfg, &d, Some(Ablation::NoImportance));
    assert!(no_imp.iter().all(|(_, p)| p.learner_block.is_some() && !p.render().contains("importance: ")));

    let no_islands = prompts_for(&cfg, &d, Some(Ablation::NoIslands));
    for (ids, _) in &no_islands {
        // generated features join the group set in later iterations
        assert!(ids.len() >= n_groups, "{ids:?}");
        for g in feature_groups(d.schema()) {
            assert!(ids.contains(&g.group_id));
        }
    }
    let snap = split_snapshot(&cfg, 0, Some(Ablation::NoIslands)).unwrap();
    let groups = feature_groups(d.schema());
    let isl = iteration_islands(&snap.engine, &ImportanceVector::uniform(&groups), &groups, 1).unwrap();
    assert_eq!(isl.len(), 1);
    let mut drawn = isl[0].groups.clone();
    drawn.sort_by(|a, b| a.group_id.cmp(&b.group_id));
    let mut all = groups.clone();
    all.sort_by(|a, b| a.group_id.cmp(&b.group_id));
    assert_eq!(drawn, all);

    let renders: Vec<String> = [&full, &no_aware, &no_imp]
        .iter()
        .map(|v| v[0].1.render())
        .collect();
    assert!(renders[0] != renders[1] && renders[1] != renders[2] && renders[0] != renders[2]);
}

#[test]
fn no_importance_first_draws_are_uniform() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, cfg) = synth(&tmp.path().join("data"), SynthSpec { n_static_numeric: 5, n_rows: 200, ..SynthSpec::default() });
    let groups = feature_groups(d.schema());
    let skewed = ImportanceVector::from_raw(groups.iter().enumerate().map(|(i, g)| (g.group_id.clone(), (i * i) as f64)).collect());
    let snap = split_snapshot(&cfg, 0, Some(Ablation::NoImportance)).unwrap();
    assert!(snap.engine.uniform_importance);
    let draws = 50_000;
    let mut counts = vec![0usize; groups.len()];
    for t in 0..draws {
        let isl = iteration_islands(&snap.engine, &skewed, &groups, t + 1).unwrap();
        let first = &isl[0].groups[0].group_id;
        counts[groups.iter().position(|g| &g.group_id == first).unwrap()] += 1;
    }
    let u = 1.0 / groups.len() as f64;
    let tv: f64 = counts.iter().map(|&c| (c as f64 / draws as f64 - u).abs()).sum::<f64>() / 2.0;
    assert!(tv <= 0.01, "{tv}");
    // the same draws under importance weighting are far from uniform
    let mut rng = seed::rng(1);
    let p = skewed.probabilities();
    let mut c2 = vec![0usize; groups.len()];
    for _ in 0..draws {
        c2[draw_without_replacement(&p, 1, &mut rng)[0]] += 1;
    }
    assert!(c2[0] == 0);
}

#[test]
fn hpo_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, cfg) = synth(&tmp.path().join("data"), SynthSpec { n_rows: 400, ..SynthSpec::default() });
    let r = run_hpo(&cfg, &d, LearnerKind::Gbdt, 5, &tmp.path().join("hpo")).unwrap();
    assert_eq!(r.trials.len(), 5);
    let csv = std::fs::read_to_string(tmp.path().join("hpo/trials.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    let lr = r.best_params["learning_rate"];
    assert!((0.01..=0.5).contains(&lr), "{lr}");
    for (k, lo, hi, _) in search_space(LearnerKind::Gbdt) {
        let v = r.best_params[*k];
        assert!(v >= *lo && v <= *hi, "{k} = {v}");
    }
}

#[test]
fn self_transfer_and_unresolved_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, cfg) = synth(&tmp.path().join("data"), SynthSpec::default());
    let run = run_experiment(&cfg, &d, &tmp.path().join("a"), None).unwrap();
    for s in &run.splits {
        let i = s.snapshot.split;
        let export = TransformationFile::read(tmp.path().join(format!("a/split_{i}/export.json"))).unwrap();
        let r = run_transfer(&cfg, &export, &d, &BTreeMap::new(), &tmp.path().join(format!("t{i}"))).unwrap();
        assert!((r.transferred_validation[i] - s.result.final_validation).abs() <= 1e-9);
        assert!((r.raw_validation[i] - s.result.baseline_validation).abs() <= 1e-9);
    }
    let export = TransformationFile::read(tmp.path().join("a/split_0/export.json")).unwrap();
    let map = BTreeMap::from([("num0".to_string(), "heart_rate".to_string())]);
    match run_transfer(&cfg, &export, &d, &map, &tmp.path().join("bad")) {
        Err(Error::Unresolved(names)) => assert_eq!(names, ["heart_rate"]),
        other => panic!("{:?}", other.map(|r| r.transferred_validation)),
    }
}

#[test]
fn cross_cohort_transfer_helps() {
    let tmp = tempfile::tempdir().unwrap();
    for s in 0..5 {
        let dir = tmp.path().join(format!("s{s}"));
        let (a, cfg) = synth(&dir.join("a"), SynthSpec { seed: s, ..SynthSpec::default() });
        let (b, _) = synth(&dir.join("b"), SynthSpec { seed: s + 100, shift: 0.5, ..SynthSpec::default() });
        run_experiment(&cfg, &a, &dir.join("run"), None).unwrap();
        let export = TransformationFile::read(dir.join("run/split_0/export.json")).unwrap();
        let r = run_transfer(&cfg, &export, &b, &BTreeMap::new(), &dir.join("t")).unwrap();
        assert!(r.transferred.auc.mean >= r.raw.auc.mean, "seed {s}");
    }
}

#[test]
fn stationary_drift_control() {
    let tmp = tempfile::tempdir().unwrap();
    // only a linear effect: discovered features add nothing, so both scenarios see the same signal
    let (d, cfg) = synth(
        &tmp.path().join("data"),
        SynthSpec {
            planted: Planted::None,
            main_effect: 2.0,
            periods: 5,
            n_rows: 5000,
            n_static_categorical: 0,
            ..SynthSpec::default()
        },
    );
    let r = run_drift(&cfg, &d, "period", 2.0, &tmp.path().join("drift")).unwrap();
    assert_eq!(r.periods.len(), 3);
    for p in &r.periods {
        assert!((p.frozen_auc - p.retrain_auc).abs() <= 0.03, "{p:?}");
    }
    let csv = std::fs::read_to_string(tmp.path().join("drift/drift.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("period,n_rows,frozen_auc,retrain_auc"));
    assert!(matches!(run_drift(&cfg, &d, "admission_year", 2.0, &tmp.path().join("x")), Err(Error::Config(_))));
}

#[test]
fn report_echoes_a_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, mut cfg) = synth(&tmp.path().join("data"), SynthSpec::default());
    cfg.task = "interaction".into();
    let run = run_experiment(&cfg, &d, &tmp.path().join("run"), None).unwrap();
    let (rep, md) = run_report(&[tmp.path().join("run")], &tmp.path().join("rep")).unwrap();
    assert_eq!(rep.runs, [run.summary.clone()]);
    assert_eq!(rep.top10_generated_fraction[0], run.summary.top10_generated_fraction);
    let ours = &rep.table[1];
    assert_eq!((ours.task.as_str(), ours.method.as_str()), ("interaction", "featloop"));
    assert_eq!(ours.auc_mean, run.summary.featloop.auc.mean);
    assert_eq!(ours.auc_improvement_pct, Some(run.summary.auc_improvement_pct));
    assert!(rep.table[0].auc_improvement_pct.is_none());
    assert!(md.starts_with("| task | method | AUC | F1 |"));
    assert!(md.contains('%'));
    for f in ["table.csv", "table.md", "top10.csv", "trajectory.csv", "report.json"] {
        assert!(tmp.path().join("rep").join(f).exists(), "{f}");
    }
}
