//! Importance-weighted sampling of small feature-group subsets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureGroup;
use crate::error::{Error, Result};
use crate::explain::ImportanceVector;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Island {
    pub iteration: usize,
    pub index: usize,
    /// Distinct groups in draw order.
    pub groups: Vec<FeatureGroup>,
    /// Member columns of all groups, without duplicates.
    pub columns: Vec<String>,
}

impl Island {
    pub fn new(iteration: usize, index: usize, groups: Vec<FeatureGroup>) -> Island {
        let mut columns: Vec<String> = Vec::new();
        for g in &groups {
            for c in &g.member_columns {
                if !columns.contains(c) {
                    columns.push(c.clone());
                }
            }
        }
        Island {
            iteration,
            index,
            groups,
            columns,
        }
    }

    pub fn group_ids(&self) -> Vec<&str> {
        self.groups.iter().map(|g| g.group_id.as_str()).collect()
    }
}

/// `m` successive draws without replacement; each draw is proportional to
/// `weights` renormalized over the items not yet drawn, falling back to
/// uniform when that mass is zero.
pub fn draw_without_replacement(weights: &[f64], m: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut out = Vec::with_capacity(m);
    for _ in 0..m.min(weights.len()) {
        let mass: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let pos = if mass > 0.0 {
            let u = rng.gen::<f64>() * mass;
            let mut acc = 0.0;
            let mut pick = None;
            for (p, &i) in remaining.iter().enumerate() {
                acc += weights[i];
                if u < acc {
                    pick = Some(p);
                    break;
                }
            }
            // rounding can leave u at the total; take the last positive weight
            pick.unwrap_or_else(|| {
                remaining
                    .iter()
                    .rposition(|&i| weights[i] > 0.0)
                    .expect("positive mass")
            })
        } else {
            rng.gen_range(0..remaining.len())
        };
        out.push(remaining.remove(pos));
    }
    out
}

/// Samples `k` islands of `m` groups each, drawn independently.
pub fn sample_islands(
    importance: &ImportanceVector,
    groups: &[FeatureGroup],
    k: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<Island>> {
    if k == 0 || m == 0 {
        return Err(Error::Sampling("island count and size must be at least 1".into()));
    }
    if m > groups.len() {
        return Err(Error::Sampling(format!(
            "island size {m} exceeds the {} available groups",
            groups.len()
        )));
    }
    let weights: Vec<f64> = groups
        .iter()
        .map(|g| importance.get(&g.group_id).map_or(0.0, |e| e.normalized))
        .collect();
    let mut rng = seed::rng(seed::derive_seed(seed, &["islands".into()]));
    Ok((0..k)
        .map(|index| {
            let picked = draw_without_replacement(&weights, m, &mut rng);
            Island::new(0, index, picked.into_iter().map(|i| groups[i].clone()).collect())
        })
        .collect())
}
