//! The `hpo` command: random search over one learner's hyperparameters.

use std::collections::BTreeSet;
use std::path::Path;

use featloop_core::data::stratified_split;
use featloop_core::learners::{hpo_search, HpoResult, LearnerKind};
use featloop_core::{Dataset, Result};

use crate::config::Config;
use crate::output::{num, write_csv, write_json};

/// Searches on split 0 and writes `hpo.json` and `trials.csv`.
pub fn run_hpo(config: &Config, dataset: &Dataset, kind: LearnerKind, budget: usize, out: &Path) -> Result<HpoResult> {
    config.check()?;
    let split = stratified_split(dataset, config.fractions(), config.split_seed(0))?;
    let result = hpo_search(kind, dataset, &split, budget, config.seed, config.hpo_options())?;
    write_json(&out.join("hpo.json"), &result)?;
    let keys: BTreeSet<&str> = result.trials.iter().flat_map(|t| t.params.keys().map(String::as_str)).collect();
    let mut header = vec!["trial", "score", "error"];
    header.extend(keys.iter().copied());
    let rows: Vec<Vec<String>> = result
        .trials
        .iter()
        .map(|t| {
            let mut row = vec![t.index.to_string(), num(t.score), t.error.clone().unwrap_or_default()];
            row.extend(keys.iter().map(|k| num(t.params.get(*k).copied())));
            row
        })
        .collect();
    write_csv(&out.join("trials.csv"), &header, &rows)?;
    Ok(result)
}

pub fn render(result: &HpoResult) -> String {
    let mut out = format!(
        "learner: {}\ntrials: {}{}\nbest validation auc: {:.4}\n",
        result.kind.as_str(),
        result.trials.len(),
        if result.stopped_early { " (stopped early)" } else { "" },
        result.best_score
    );
    for (k, v) in &result.best_params {
        out += &format!("  {k} = {v}\n");
    }
    out
}
