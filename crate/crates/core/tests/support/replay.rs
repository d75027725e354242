//! Stub learner, scorer and proposer replaying a logged acceptance decision.

#![allow(dead_code)]

use featloop_core::data::{Cell, ColumnSchema, Dataset, Schema, SplitIndices};
use featloop_core::learners::{Learner, LearnerKind, Scorer};
use featloop_core::proposer::{ProposalRequest, Proposer};
use featloop_core::Result;

/// Scores whose AUC on any row set is `target`, up to pair-count rounding.
pub struct FixedAuc(pub f64);

impl Scorer for FixedAuc {
    fn feature_names(&self) -> Vec<String> {
        Vec::new()
    }

    fn predict_scores(&self, dataset: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
        let labels: Vec<u8> = indices.iter().map(|&r| dataset.labels()[r]).collect();
        let pos = labels.iter().filter(|&&y| y == 1).count();
        let neg = labels.len() - pos;
        let pairs = (self.0 * (pos * neg) as f64).round() as usize;
        let (mut seen_pos, mut seen_neg) = (0, 0);
        Ok(labels
            .iter()
            .map(|&y| {
                if y == 1 {
                    // negatives scored below this positive
                    let below = pairs / pos + usize::from(seen_pos < pairs % pos);
                    seen_pos += 1;
                    below as f64 - 0.5
                } else {
                    seen_neg += 1;
                    (seen_neg - 1) as f64
                }
            })
            .collect())
    }
}

/// Reports the logged validation AUCs: one value without the generated column, another with it.
pub struct LoggedLearner;

impl Learner for LoggedLearner {
    fn kind(&self) -> LearnerKind {
        LearnerKind::Gbdt
    }

    fn fit(&self, dataset: &Dataset, _train: &[usize]) -> Result<Box<dyn Scorer>> {
        let with = dataset.column("age_imd_interaction").is_some();
        Ok(Box::new(FixedAuc(if with { 0.758 } else { 0.736 })))
    }
}

pub struct Fixed(pub &'static str);

impl Proposer for Fixed {
    fn id(&self) -> String {
        "fixed".into()
    }

    fn propose(&self, _: &ProposalRequest<'_>) -> Result<String> {
        Ok(self.0.to_string())
    }
}

pub const LOGGED_PROGRAM: &str = "# age and deprivation compound risk
feature age_imd_interaction = (col(age) - trainmin(col(age))) / (trainmax(col(age)) - trainmin(col(age))) * ((col(imd) - trainmin(col(imd))) / (trainmax(col(imd)) - trainmin(col(imd))))";

/// 180 rows: train 40/50, validation and test 20/25 positives/negatives each.
pub fn logged_fixture() -> (Dataset, SplitIndices) {
    let schema = Schema::new(vec![
        ColumnSchema::numeric("age", "age in years"),
        ColumnSchema::numeric("imd", "deprivation score"),
        ColumnSchema::numeric("hours_since_admission", ""),
        ColumnSchema::label("died", ""),
    ])
    .unwrap();
    let n = 180;
    let rows = (0..n)
        .map(|i| vec![Cell::Num((i % 70) as f64 + 18.0), Cell::Num((i * 7 % 30) as f64), Cell::Num(i as f64)])
        .collect();
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 9 < 4)).collect();
    let d = Dataset::from_rows(schema, rows, labels).unwrap();
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| d.labels()[i] == 1);
    let split = SplitIndices {
        train: [&pos[..40], &neg[..50]].concat(),
        val: [&pos[40..60], &neg[50..75]].concat(),
        test: [&pos[60..80], &neg[75..100]].concat(),
    };
    (d, split)
}
