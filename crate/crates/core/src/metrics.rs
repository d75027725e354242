//! Ranking and threshold metrics for binary classifiers.
//!
//! AUC and Youden's J are computed from integer counts so that equal inputs
//! always produce bit-identical outputs regardless of row order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("both classes must be present".into()));
    }
    Ok((pos, neg))
}

/// Indices grouped by equal score, groups in descending score order.
fn descending_groups(scores: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=scores.len() {
        if i == scores.len() || scores[i] != scores[start] {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

fn sorted_desc(scores: &[f64], labels: &[u8]) -> (Vec<f64>, Vec<u8>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    (
        order.iter().map(|&i| scores[i]).collect(),
        order.iter().map(|&i| labels[i]).collect(),
    )
}

/// Mann-Whitney AUC: the share of positive-negative pairs ranked correctly,
/// with tied pairs counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let (s, y) = sorted_desc(scores, labels);
    // twice the number of correctly ordered pairs, ties contributing 1
    let mut doubled: u128 = 0;
    let mut neg_below: u64 = neg;
    for g in descending_groups(&s) {
        let p = y[g.clone()].iter().filter(|&&v| v == 1).count() as u64;
        let n = g.len() as u64 - p;
        neg_below -= n;
        doubled += u128::from(p) * (2 * u128::from(neg_below) + u128::from(n));
    }
    Ok(doubled as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Threshold maximizing TPR - FPR under the rule `score >= t`.
///
/// Candidates are `+inf`, the midpoints between adjacent distinct scores and
/// `-inf`; among equal J the largest threshold wins.
pub fn youden_threshold(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let (s, y) = sorted_desc(scores, labels);
    let groups = descending_groups(&s);
    let (mut tp, mut fp) = (0i128, 0i128);
    // J scaled by pos*neg is an exact integer
    let j = |tp: i128, fp: i128| tp * neg as i128 - fp * pos as i128;
    let mut best = (j(0, 0), f64::INFINITY);
    for (k, g) in groups.iter().enumerate() {
        let p = y[g.clone()].iter().filter(|&&v| v == 1).count() as i128;
        tp += p;
        fp += g.len() as i128 - p;
        let threshold = match groups.get(k + 1) {
            Some(next) => midpoint(s[next.start], s[g.start]),
            None => f64::NEG_INFINITY,
        };
        let score = j(tp, fp);
        if score > best.0 {
            best = (score, threshold);
        }
    }
    Ok(best.1)
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) / 2.0
}

/// F1 of the predictions `score >= threshold`; 0 when precision + recall is 0.
pub fn f1_at(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub f1: f64,
    /// May be a sentinel `±inf`, stored as the strings "inf" and "-inf".
    #[serde(with = "extended_float")]
    pub threshold: f64,
}

/// JSON has no infinities; they round-trip as strings.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            f64::INFINITY => "inf".serialize(s),
            f64::NEG_INFINITY => "-inf".serialize(s),
            x => x.serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad threshold `{t}`"))),
        }
    }
}

/// AUC of `scores` plus F1 at a threshold chosen elsewhere (normally on validation).
pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64) -> Result<EvalReport> {
    Ok(EvalReport {
        auc: auc(scores, labels)?,
        f1: f1_at(scores, labels, threshold),
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; absent for a single value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() >= 2).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1.0)).sqrt()
        });
        Summary { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub per_split: Vec<EvalReport>,
    pub auc: Summary,
    pub f1: Summary,
}

impl AggregateReport {
    /// Percentage improvement of mean AUC and mean F1 over `baseline`.
    pub fn improvement_over(&self, baseline: &AggregateReport) -> (f64, f64) {
        (
            pct_improvement(self.auc.mean, baseline.auc.mean),
            pct_improvement(self.f1.mean, baseline.f1.mean),
        )
    }
}

/// Mean and sample standard deviation per metric across splits.
pub fn aggregate(reports: &[EvalReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::Metric("nothing to aggregate".into()));
    }
    let aucs: Vec<f64> = reports.iter().map(|r| r.auc).collect();
    let f1s: Vec<f64> = reports.iter().map(|r| r.f1).collect();
    Ok(AggregateReport {
        per_split: reports.to_vec(),
        auc: Summary::of(&aucs),
        f1: Summary::of(&f1s),
    })
}

pub fn pct_improvement(new: f64, base: f64) -> f64 {
    (new - base) / base * 100.0
}
