use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn parts(&self) -> [&[usize]; 3] {
        [&self.train, &self.val, &self.test]
    }
}

/// Largest-remainder allocation of `n` items over `fractions`, then topped up
/// so every part receives at least one item. Each count stays within 1 of
/// `n * fraction`.
pub(crate) fn allocate(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // stable sort keeps earlier parts first on equal remainders
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra)
    });
    for &p in order.iter().take(n.saturating_sub(assigned)) {
        counts[p] += 1;
    }
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let donor = (0..counts.len())
            .filter(|&p| counts[p] > 1)
            .max_by(|&a, &b| {
                (counts[a] as f64 - exact[a])
                    .total_cmp(&(counts[b] as f64 - exact[b]))
                    .then(b.cmp(&a))
            })
            .expect("n >= parts guarantees a donor");
        counts[donor] -= 1;
        counts[empty] += 1;
    }
    counts
}

/// Class-stratified train/validation/test split.
pub fn stratified_split(dataset: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<SplitIndices> {
    let fr = [fractions.0, fractions.1, fractions.2];
    if fr.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
        return Err(Error::Split("every fraction must be positive".into()));
    }
    if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Split("fractions must sum to 1".into()));
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    for class in [0u8, 1] {
        let mut members: Vec<usize> = dataset
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &y)| y == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < fr.len() {
            return Err(Error::Split(format!(
                "class {class} has {} members, fewer than the {} parts",
                members.len(),
                fr.len()
            )));
        }
        let mut rng = seed::rng(seed::derive_seed(seed, &["split".into(), u64::from(class).into()]));
        members.shuffle(&mut rng);
        let counts = allocate(members.len(), &fr);
        let mut start = 0;
        for (part, count) in parts.iter_mut().zip(counts) {
            part.extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }
    for part in parts.iter_mut() {
        part.sort_unstable();
    }
    let [train, val, test] = parts;
    Ok(SplitIndices { train, val, test })
}
