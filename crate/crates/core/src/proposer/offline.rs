//! Deterministic template proposer, a stand-in for a language model.

use crate::data::{ColumnKind, Schema};
use crate::error::{Error, Result};
use crate::islands::Island;
use crate::learners::LearnerKind;
use crate::proposer::memory::MemoryBank;

fn minmax(c: &str) -> String {
    format!("(col({c}) - trainmin(col({c}))) / (trainmax(col({c})) - trainmin(col({c})))")
}

fn zscore(c: &str) -> String {
    format!("(col({c}) - trainmean(col({c}))) / trainstd(col({c}))")
}

fn pairs(cols: &[&str]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (i, a) in cols.iter().enumerate() {
        for b in &cols[i + 1..] {
            out.push((a.to_string(), b.to_string()));
        }
    }
    out
}

fn products(cols: &[&str]) -> Vec<String> {
    pairs(cols)
        .into_iter()
        .map(|(a, b)| format!("feature {a}_x_{b} = col({a}) * col({b})"))
        .collect()
}

fn normalized_products(cols: &[&str]) -> Vec<String> {
    pairs(cols)
        .into_iter()
        .map(|(a, b)| format!("feature {a}_x_{b}_scaled = {} * ({})", minmax(&a), minmax(&b)))
        .collect()
}

fn thresholds(cols: &[&str]) -> Vec<String> {
    cols.iter()
        .map(|c| format!("feature {c}_above_median = if(col({c}) > trainmedian(col({c})), 1, 0)"))
        .collect()
}

fn group_summaries(groups: &[&str], aggs: &[&str]) -> Vec<String> {
    aggs.iter()
        .flat_map(|agg| groups.iter().map(move |g| format!("feature {g}_{agg} = {agg}({g})")))
        .collect()
}

fn normalized_sum(cols: &[&str]) -> Vec<String> {
    if cols.len() < 2 {
        return Vec::new();
    }
    let body: Vec<String> = cols.iter().map(|c| zscore(c)).collect();
    vec![format!("feature {}_zsum = {}", cols.join("_"), body.join(" + "))]
}

/// Candidate programs for an island, in template-major order.
pub fn templates(island: &Island, learner_kind: LearnerKind, schema: &Schema) -> Vec<String> {
    // static numeric columns in schema order, so pair names do not depend on draw order
    let mut statics: Vec<&str> = island
        .groups
        .iter()
        .filter(|g| !g.is_temporal)
        .filter(|g| schema.column(&g.group_id).is_some_and(|c| c.kind == ColumnKind::Numeric))
        .map(|g| g.group_id.as_str())
        .collect();
    let position = |n: &str| schema.columns.iter().position(|c| c.name == n);
    statics.sort_by_key(|n| position(n));
    let mut temporal: Vec<&str> = island
        .groups
        .iter()
        .filter(|g| g.is_temporal)
        .map(|g| g.group_id.as_str())
        .collect();
    temporal.sort_by_key(|g| schema.group_members(g).first().and_then(|(n, _)| position(n)));

    let mut out = Vec::new();
    match learner_kind {
        LearnerKind::Logreg => {
            out.extend(products(&statics));
            out.extend(normalized_products(&statics));
            out.extend(thresholds(&statics));
            out.extend(group_summaries(&temporal, &["gslope", "gdelta"]));
        }
        LearnerKind::Gbdt => {
            out.extend(group_summaries(&temporal, &["gslope", "gdelta", "gstd"]));
            out.extend(normalized_sum(&statics));
            out.extend(normalized_products(&statics));
        }
    }
    out
}

/// Walks the templates cyclically from `seed % len`, skipping any text already in memory.
pub fn offline_propose(
    island: &Island,
    memory: &MemoryBank,
    learner_kind: LearnerKind,
    schema: &Schema,
    seed: u64,
) -> Result<String> {
    let list = templates(island, learner_kind, schema);
    if list.is_empty() {
        return Err(Error::IslandExhausted);
    }
    let start = (seed % list.len() as u64) as usize;
    (0..list.len())
        .map(|i| &list[(start + i) % list.len()])
        .find(|p| !memory.contains(p))
        .cloned()
        .ok_or(Error::IslandExhausted)
}
