//! Synthetic clinical-style panels with a planted label signal.
//!
//! Static numeric columns are `num0, num1, ..`, categoricals `cat0, ..`,
//! temporal groups `t0, t1, ..` with members `t0@0h, t0@6h, ..`. The planted
//! interaction uses `num0` and `num1`; the planted slope uses group `t0`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Cell, ColumnSchema, Dataset, Schema};
use crate::error::{Error, Result};
use crate::learners::logreg::sigmoid;
use crate::seed;

pub const LABEL: &str = "outcome";
pub const PERIOD_COLUMN: &str = "period";
/// Hours between consecutive temporal measurements.
pub const STEP_HOURS: f64 = 6.0;
/// Spread of per-row temporal baselines; much larger than within-row change,
/// so trees on raw members see the slope only through fine differences.
pub const TEMPORAL_BASE_SD: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Planted {
    /// Label depends on the product of standardized `num0` and `num1`.
    Interaction,
    /// Label depends on the within-group slope of `t0`.
    TemporalSlope,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_rows: usize,
    pub n_static_numeric: usize,
    pub n_static_categorical: usize,
    pub n_temporal_groups: usize,
    pub group_length: usize,
    pub missing_rate: f64,
    pub positive_rate: f64,
    pub planted: Planted,
    /// Logit scale of the planted term.
    pub signal: f64,
    /// Logit coefficient on standardized `num{last}`, a linear effect any learner can use.
    pub main_effect: f64,
    pub noise_sd: f64,
    /// Number of ordering periods; 0 omits the period column.
    pub periods: usize,
    /// Per-period shift of every numeric mean, in units of that column's sd.
    pub drift: f64,
    /// Constant shift of every numeric mean, in units of that column's sd.
    pub shift: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_rows: 4000,
            n_static_numeric: 2,
            n_static_categorical: 1,
            n_temporal_groups: 0,
            group_length: 4,
            missing_rate: 0.0,
            positive_rate: 0.3,
            planted: Planted::Interaction,
            signal: 3.0,
            main_effect: 0.0,
            noise_sd: 0.5,
            periods: 0,
            drift: 0.0,
            shift: 0.0,
            seed: 0,
        }
    }
}

/// What was planted, for tests and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub planted: Planted,
    /// Columns or groups carrying the planted signal.
    pub signal_columns: Vec<String>,
    pub intercept: f64,
    pub description: String,
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

impl SynthSpec {
    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth spec: {m}")));
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return bad("positive_rate must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad("missing_rate must lie in [0, 1)");
        }
        if self.n_rows < 10 {
            return bad("n_rows must be at least 10");
        }
        if self.n_static_numeric + self.n_static_categorical + self.n_temporal_groups == 0 {
            return bad("at least one feature is required");
        }
        if self.n_temporal_groups > 0 && self.group_length < 2 {
            return bad("group_length must be at least 2");
        }
        if self.planted == Planted::Interaction && self.n_static_numeric < 2 {
            return bad("interaction needs two static numeric columns");
        }
        if self.planted == Planted::TemporalSlope && self.n_temporal_groups == 0 {
            return bad("temporal_slope needs a temporal group");
        }
        if self.main_effect != 0.0 && self.n_static_numeric == 0 {
            return bad("main_effect needs a static numeric column");
        }
        if !(self.noise_sd >= 0.0) {
            return bad("noise_sd must be nonnegative");
        }
        Ok(())
    }
}

/// Bisects the intercept so the mean predicted probability equals `rate`.
fn calibrate_intercept(logits: &[f64], rate: f64) -> f64 {
    let mean_p = |b: f64| logits.iter().map(|&z| sigmoid(z + b)).sum::<f64>() / logits.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if mean_p(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / 2.0
}

pub fn generate(spec: &SynthSpec) -> Result<(Dataset, GroundTruth)> {
    spec.check()?;
    let mut rng = seed::rng(seed::derive_seed(spec.seed, &["synth".into()]));
    let n = spec.n_rows;
    let period: Vec<usize> = (0..n).map(|i| if spec.periods > 0 { i * spec.periods / n } else { 0 }).collect();

    let mut specs = Vec::new();
    let mut columns: Vec<Vec<Cell>> = Vec::new();
    // standardized values, drift removed, for the label model
    let mut z_static: Vec<Vec<f64>> = Vec::new();

    if spec.periods > 0 {
        specs.push(ColumnSchema::numeric(PERIOD_COLUMN, "ordering period of the record"));
        columns.push(period.iter().map(|&p| Cell::Num(p as f64)).collect());
    }
    for j in 0..spec.n_static_numeric {
        let mean = rng.gen_range(20.0..80.0);
        let sd = rng.gen_range(5.0..15.0);
        let z: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let cells = (0..n)
            .map(|i| {
                let offset = spec.shift + spec.drift * period[i] as f64;
                Cell::Num(mean + sd * (z[i] + offset))
            })
            .collect();
        specs.push(ColumnSchema::numeric(format!("num{j}"), format!("static measurement {j}")));
        columns.push(cells);
        z_static.push(z);
    }
    for j in 0..spec.n_static_categorical {
        let tokens = ["A", "B", "C", "D"];
        let cells = (0..n).map(|_| Cell::Cat(tokens[rng.gen_range(0..tokens.len())].to_string())).collect();
        specs.push(ColumnSchema::categorical(format!("cat{j}"), format!("static category {j}")));
        columns.push(cells);
    }
    let mut slopes: Vec<f64> = Vec::new();
    for g in 0..spec.n_temporal_groups {
        let group = format!("t{g}");
        let base_mean = rng.gen_range(50.0..100.0);
        let base_sd = TEMPORAL_BASE_SD;
        let row_base: Vec<f64> = (0..n).map(|_| base_mean + base_sd * normal(&mut rng)).collect();
        let row_slope: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        for k in 0..spec.group_length {
            let t = k as f64 * STEP_HOURS;
            let cells = (0..n)
                .map(|i| {
                    let offset = base_sd * (spec.shift + spec.drift * period[i] as f64);
                    Cell::Num(row_base[i] + offset + row_slope[i] * t + normal(&mut rng))
                })
                .collect();
            let name = format!("{group}@{}h", k as f64 * STEP_HOURS);
            specs.push(ColumnSchema::temporal(name, format!("repeated measurement {g}"), group.clone(), t));
            columns.push(cells);
        }
        if g == 0 {
            slopes = row_slope;
        }
    }
    specs.push(ColumnSchema::label(LABEL, "binary outcome"));

    let (mut logits, signal_columns, description): (Vec<f64>, Vec<String>, String) = match spec.planted {
        Planted::Interaction => (
            (0..n).map(|i| spec.signal * z_static[0][i] * z_static[1][i]).collect(),
            vec!["num0".into(), "num1".into()],
            "logit depends on the product of standardized num0 and num1".into(),
        ),
        Planted::TemporalSlope => (
            slopes.iter().map(|s| spec.signal * s).collect(),
            vec!["t0".into()],
            "logit depends on the least-squares slope of group t0".into(),
        ),
        Planted::None => (vec![0.0; n], Vec::new(), "no planted signal".into()),
    };
    if spec.main_effect != 0.0 {
        let last = spec.n_static_numeric - 1;
        for (l, z) in logits.iter_mut().zip(&z_static[last]) {
            *l += spec.main_effect * z;
        }
    }
    for l in &mut logits {
        *l += spec.noise_sd * normal(&mut rng);
    }
    let intercept = calibrate_intercept(&logits, spec.positive_rate);
    let labels: Vec<u8> = logits
        .iter()
        .map(|&z| u8::from(rng.gen::<f64>() < sigmoid(z + intercept)))
        .collect();

    if spec.missing_rate > 0.0 {
        let first = usize::from(spec.periods > 0);
        for col in &mut columns[first..] {
            for cell in col.iter_mut() {
                if rng.gen::<f64>() < spec.missing_rate {
                    *cell = Cell::Missing;
                }
            }
        }
    }
    let rows: Vec<Vec<Cell>> = (0..n).map(|i| columns.iter().map(|c| c[i].clone()).collect()).collect();
    let dataset = Dataset::from_rows(Schema::new(specs)?, rows, labels)?;
    Ok((
        dataset,
        GroundTruth {
            planted: spec.planted,
            signal_columns,
            intercept,
            description,
        },
    ))
}
