//! Grouped permutation importance on the validation split.
//!
//! The members of a group are shuffled jointly with one permutation, so
//! within-row relations between them survive while their link to the label
//! is broken. Raw scores are nonnegative AUC drops; normalized scores form
//! the island-sampling distribution.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureGroup};
use crate::dsl::TransformationSet;
use crate::error::{Error, Result};
use crate::learners::Scorer;
use crate::metrics::auc;
use crate::seed;

pub const DEFAULT_REPEATS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub group_id: String,
    pub raw: f64,
    pub normalized: f64,
    /// 1-based; by descending raw score, ties by group id.
    pub rank: usize,
}

/// One entry per feature group, in group order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceVector {
    /// Builds normalized scores and ranks from raw scores; negative raw scores are clamped to 0.
    pub fn from_raw(raw: Vec<(String, f64)>) -> ImportanceVector {
        let entries = raw
            .into_iter()
            .map(|(group_id, r)| ImportanceEntry {
                group_id,
                raw: r.max(0.0),
                normalized: 0.0,
                rank: 0,
            })
            .collect();
        normalize(&ImportanceVector { entries })
    }

    /// Equal importance for every group.
    pub fn uniform(groups: &[FeatureGroup]) -> ImportanceVector {
        Self::from_raw(groups.iter().map(|g| (g.group_id.clone(), 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, group_id: &str) -> Option<&ImportanceEntry> {
        self.entries.iter().find(|e| e.group_id == group_id)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.normalized).collect()
    }

    /// Entries sorted by rank.
    pub fn ranked(&self) -> Vec<&ImportanceEntry> {
        let mut v: Vec<&ImportanceEntry> = self.entries.iter().collect();
        v.sort_by_key(|e| e.rank);
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("importance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
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

/// Recomputes normalized scores (`raw / sum`, uniform when the sum is 0) and ranks.
pub fn normalize(importance: &ImportanceVector) -> ImportanceVector {
    let mut entries = importance.entries.clone();
    let total: f64 = entries.iter().map(|e| e.raw).sum();
    let g = entries.len() as f64;
    for e in &mut entries {
        e.normalized = if total > 0.0 { e.raw / total } else { 1.0 / g };
    }
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        entries[b]
            .raw
            .total_cmp(&entries[a].raw)
            .then_with(|| entries[a].group_id.cmp(&entries[b].group_id))
    });
    for (rank, i) in order.into_iter().enumerate() {
        entries[i].rank = rank + 1;
    }
    ImportanceVector { entries }
}

/// Produces per-group relevance scores for a trained model.
pub trait Explainer: Send + Sync {
    fn explain(
        &self,
        model: &dyn Scorer,
        dataset: &Dataset,
        val: &[usize],
        groups: &[FeatureGroup],
        seed: u64,
    ) -> Result<ImportanceVector>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationExplainer {
    pub repeats: usize,
}

impl Default for PermutationExplainer {
    fn default() -> Self {
        Self {
            repeats: DEFAULT_REPEATS,
        }
    }
}

impl Explainer for PermutationExplainer {
    fn explain(
        &self,
        model: &dyn Scorer,
        dataset: &Dataset,
        val: &[usize],
        groups: &[FeatureGroup],
        seed: u64,
    ) -> Result<ImportanceVector> {
        grouped_permutation_importance(model, dataset, val, groups, self.repeats, seed)
    }
}

/// For each group, the mean over `repeats` of `max(0, AUC drop)` when the
/// group's member columns are jointly permuted across `val` rows.
pub fn grouped_permutation_importance(
    model: &dyn Scorer,
    dataset: &Dataset,
    val: &[usize],
    groups: &[FeatureGroup],
    repeats: usize,
    seed: u64,
) -> Result<ImportanceVector> {
    if repeats == 0 {
        return Err(Error::Metric("repeats must be at least 1".into()));
    }
    let labels: Vec<u8> = val.iter().map(|&r| dataset.labels()[r]).collect();
    let base = auc(&model.predict_scores(dataset, val)?, &labels)?;
    let used = model.feature_names();
    let raw: Vec<(String, f64)> = groups
        .par_iter()
        .map(|g| -> Result<(String, f64)> {
            if !g.member_columns.iter().any(|c| used.contains(c)) {
                return Ok((g.group_id.clone(), 0.0));
            }
            let members: Vec<usize> = g
                .member_columns
                .iter()
                .map(|c| {
                    dataset
                        .column_index(c)
                        .ok_or_else(|| Error::Data(format!("group member `{c}` absent from dataset")))
                })
                .collect::<Result<_>>()?;
            let mut total = 0.0;
            for r in 0..repeats {
                let mut perm: Vec<usize> = (0..val.len()).collect();
                let s = seed::derive_seed(seed, &[g.group_id.as_str().into(), r.into()]);
                perm.shuffle(&mut seed::rng(s));
                let replaced = members
                    .iter()
                    .map(|&j| (j, dataset.column_at(j).permuted(val, &perm)))
                    .collect();
                let shuffled = dataset.with_replaced(replaced);
                let permuted_auc = auc(&model.predict_scores(&shuffled, val)?, &labels)?;
                total += (base - permuted_auc).max(0.0);
            }
            Ok((g.group_id.clone(), total / repeats as f64))
        })
        .collect::<Result<_>>()?;
    Ok(ImportanceVector::from_raw(raw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub rank: usize,
    pub group_id: String,
    pub raw: f64,
    pub normalized: f64,
    /// True when the entry is an engineered (generated) feature.
    pub generated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub lines: Vec<ReportLine>,
}

impl ImportanceReport {
    /// Share of generated features among the `k` best-ranked entries.
    pub fn top_k_generated_fraction(&self, k: usize) -> f64 {
        let top = &self.lines[..k.min(self.lines.len())];
        if top.is_empty() {
            return 0.0;
        }
        top.iter().filter(|l| l.generated).count() as f64 / top.len() as f64
    }
}

pub fn importance_report(importance: &ImportanceVector, sigma: &TransformationSet) -> ImportanceReport {
    let lines = importance
        .ranked()
        .into_iter()
        .map(|e| ReportLine {
            rank: e.rank,
            group_id: e.group_id.clone(),
            raw: e.raw,
            normalized: e.normalized,
            generated: sigma.contains(&e.group_id),
        })
        .collect();
    ImportanceReport { lines }
}
