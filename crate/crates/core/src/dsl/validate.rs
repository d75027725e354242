use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dsl::transform::FittedTransformation;

/// Training-row missing fraction above which a feature is rejected.
pub const MAX_MISSING_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityReason {
    Ok,
    NonFiniteOutput,
    AllMissing,
    ZeroVariance,
    ExcessMissing,
    RuntimeError,
}

impl ValidityReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ValidityReason::Ok => "ok",
            ValidityReason::NonFiniteOutput => "non_finite_output",
            ValidityReason::AllMissing => "all_missing",
            ValidityReason::ZeroVariance => "zero_variance",
            ValidityReason::ExcessMissing => "excess_missing",
            ValidityReason::RuntimeError => "runtime_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub valid: bool,
    pub reason: ValidityReason,
    /// Fraction of training rows whose output is missing.
    pub missing_fraction: f64,
}

impl ValidityReport {
    fn invalid(reason: ValidityReason, missing_fraction: f64) -> Self {
        Self {
            valid: false,
            reason,
            missing_fraction,
        }
    }
}

pub fn validate(fitted: &FittedTransformation, dataset: &Dataset, train_indices: &[usize]) -> ValidityReport {
    let values = match fitted.apply(dataset) {
        Ok(v) => v,
        Err(_) => return ValidityReport::invalid(ValidityReason::RuntimeError, 1.0),
    };
    check_values(&values, train_indices)
}

/// Applies the validity rules to already computed outputs.
pub fn check_values(values: &[Option<f64>], train_indices: &[usize]) -> ValidityReport {
    let train: Vec<Option<f64>> = train_indices.iter().map(|&r| values[r]).collect();
    let missing = train.iter().filter(|v| v.is_none()).count();
    let missing_fraction = if train.is_empty() {
        1.0
    } else {
        missing as f64 / train.len() as f64
    };
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return ValidityReport::invalid(ValidityReason::NonFiniteOutput, missing_fraction);
    }
    if missing == train.len() {
        return ValidityReport::invalid(ValidityReason::AllMissing, missing_fraction);
    }
    if missing_fraction > MAX_MISSING_FRACTION {
        return ValidityReport::invalid(ValidityReason::ExcessMissing, missing_fraction);
    }
    let mut observed = train.iter().flatten();
    let first = *observed.next().expect("at least one observed value");
    if observed.all(|&v| v == first) {
        return ValidityReport::invalid(ValidityReason::ZeroVariance, missing_fraction);
    }
    ValidityReport {
        valid: true,
        reason: ValidityReason::Ok,
        missing_fraction,
    }
}
