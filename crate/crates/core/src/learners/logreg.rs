//! L2-regularized logistic regression with balanced class weights.
//!
//! Objective over the standardized inputs, with `theta = [w.., b]`:
//! `J = (1/N) sum_i s_i * logloss_i + |w|^2 / (2 C N)`, intercept unpenalized.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::encode::{Encoder, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogregParams {
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogregParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogregModel {
    pub medians: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
}

/// `N / (2 N_c)` for class 0 and class 1.
pub fn class_weights(labels: &[u8]) -> (f64, f64) {
    let n = labels.len() as f64;
    let n1 = labels.iter().filter(|&&y| y == 1).count() as f64;
    (n / (2.0 * (n - n1)), n / (2.0 * n1))
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Weighted, regularized logistic loss over a row-major design matrix.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    x: Vec<f64>,
    n: usize,
    d: usize,
    y: Vec<f64>,
    weights: Vec<f64>,
    c: f64,
}

impl LogisticObjective {
    /// `rows` are feature vectors without the intercept column.
    pub fn new(rows: &[Vec<f64>], labels: &[u8], weights: &[f64], c: f64) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        Self {
            x: rows.iter().flatten().copied().collect(),
            n: rows.len(),
            d,
            y: labels.iter().map(|&y| f64::from(y)).collect(),
            weights: weights.to_vec(),
            c,
        }
    }

    pub fn dim(&self) -> usize {
        self.d + 1
    }

    pub fn value_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (d, n) = (self.d, self.n as f64);
        let (w, b) = (&theta[..d], theta[d]);
        let mut grad = vec![0.0; d + 1];
        let mut loss = 0.0;
        for i in 0..self.n {
            let row = &self.x[i * d..(i + 1) * d];
            let z = b + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            let s = self.weights[i];
            loss += s * (softplus(z) - self.y[i] * z);
            let r = s * (sigmoid(z) - self.y[i]);
            for (g, &a) in grad[..d].iter_mut().zip(row) {
                *g += r * a;
            }
            grad[d] += r;
        }
        let reg = 1.0 / (self.c * n);
        let mut value = loss / n;
        for j in 0..d {
            grad[j] = grad[j] / n + reg * w[j];
            value += 0.5 * reg * w[j] * w[j];
        }
        grad[d] /= n;
        (value, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Limited-memory BFGS with Armijo backtracking. Returns the minimizer and
/// the number of iterations taken.
pub fn minimize_lbfgs(
    f: impl Fn(&[f64]) -> (f64, Vec<f64>),
    x0: Vec<f64>,
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, usize) {
    const MEMORY: usize = 10;
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut history: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    let mut iter = 0;
    while iter < max_iter && inf_norm(&g) > tol {
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / inf_norm(&g).max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let (fn_, gn) = f(&xn);
            if fn_ <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        iter += 1;
        let Some((xn, fn_, gn)) = accepted else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fn_;
        g = gn;
    }
    (x, iter)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

impl LogregModel {
    /// Imputed and standardized row-major inputs.
    fn design(&self, m: &Matrix) -> Vec<Vec<f64>> {
        (0..m.n_rows)
            .map(|i| {
                (0..m.n_cols())
                    .map(|j| {
                        let v = m.cols[j][i];
                        let v = if v.is_nan() { self.medians[j] } else { v };
                        (v - self.means[j]) / self.scales[j]
                    })
                    .collect()
            })
            .collect()
    }

    pub fn scores(&self, m: &Matrix) -> Vec<f64> {
        self.design(m)
            .iter()
            .map(|row| sigmoid(self.intercept + dot(row, &self.coef)))
            .collect()
    }
}

/// `train` must be sorted.
pub fn train(dataset: &Dataset, train: &[usize], params: &LogregParams) -> Result<(Encoder, LogregModel)> {
    if !(params.c > 0.0) || !params.c.is_finite() {
        return Err(Error::LearnerSpec(format!("C must be positive and finite, got {}", params.c)));
    }
    let labels: Vec<u8> = train.iter().map(|&r| dataset.labels()[r]).collect();
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    if n1 == 0 || n1 == labels.len() {
        return Err(Error::Training("training rows contain a single class".into()));
    }
    let encoder = Encoder::fit(dataset, train);
    let m = encoder.encode(dataset, train)?;
    let n = m.n_rows as f64;
    let mut model = LogregModel {
        medians: Vec::with_capacity(m.n_cols()),
        means: Vec::with_capacity(m.n_cols()),
        scales: Vec::with_capacity(m.n_cols()),
        coef: Vec::new(),
        intercept: 0.0,
        iterations: 0,
    };
    for col in &m.cols {
        let med = median(col.iter().copied().filter(|v| !v.is_nan()).collect()).unwrap_or(0.0);
        let imputed = col.iter().map(|&v| if v.is_nan() { med } else { v });
        let mean = imputed.clone().sum::<f64>() / n;
        let var = imputed.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        model.medians.push(med);
        model.means.push(mean);
        model.scales.push(if sd > 0.0 { sd } else { 1.0 });
    }
    let (w0, w1) = class_weights(&labels);
    let weights: Vec<f64> = labels.iter().map(|&y| if y == 1 { w1 } else { w0 }).collect();
    let objective = LogisticObjective::new(&model.design(&m), &labels, &weights, params.c);
    let (theta, iterations) = minimize_lbfgs(
        |t| objective.value_grad(t),
        vec![0.0; objective.dim()],
        params.max_iter,
        params.tol,
    );
    let d = m.n_cols();
    model.coef = theta[..d].to_vec();
    model.intercept = theta[d];
    model.iterations = iterations;
    Ok((encoder, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn balanced_weights_cancel_the_intercept_gradient() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i < 10)).collect();
        let (w0, w1) = class_weights(&labels);
        assert_eq!((w0, w1), (100.0 / 180.0, 5.0));
        let weights: Vec<f64> = labels.iter().map(|&y| if y == 1 { w1 } else { w0 }).collect();
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![f64::from(i) / 100.0]).collect();
        let obj = LogisticObjective::new(&rows, &labels, &weights, 1.0);
        let (_, g) = obj.value_grad(&[0.0, 0.0]);
        // (90 * w0 * 0.5 - 10 * w1 * 0.5) / 100
        assert!(g[1].abs() < 1e-15);
    }

    fn grid_argmin(obj: &LogisticObjective) -> (f64, f64) {
        let (mut cw, mut cb, mut half) = (0.0, 0.0, 8.0);
        for step in [0.1, 0.01, 0.001, 0.0001] {
            let k = (half / step) as i64;
            let mut best = (f64::INFINITY, cw, cb);
            for i in -k..=k {
                for j in -k..=k {
                    let (w, b) = (cw + i as f64 * step, cb + j as f64 * step);
                    let v = obj.value_grad(&[w, b]).0;
                    if v < best.0 {
                        best = (v, w, b);
                    }
                }
            }
            (cw, cb) = (best.1, best.2);
            half = step * 20.0;
        }
        (cw, cb)
    }

    #[test]
    fn optimizer_matches_grid_search() {
        let rows: Vec<Vec<f64>> = [-1.2, -0.3, 0.1, 0.8, 1.5].iter().map(|&x| vec![x]).collect();
        let labels = [0, 1, 0, 1, 1];
        let weights = [1.25, 5.0 / 6.0, 1.25, 5.0 / 6.0, 5.0 / 6.0];
        for c in [0.5, 2.0] {
            let obj = LogisticObjective::new(&rows, &labels, &weights, c);
            let (theta, _) = minimize_lbfgs(|t| obj.value_grad(t), vec![0.0, 0.0], 1000, 1e-6);
            let (w, b) = grid_argmin(&obj);
            assert!((theta[0] - w).abs() < 1e-3 && (theta[1] - b).abs() < 1e-3, "{theta:?} vs {w} {b}");
        }
    }

    #[test]
    fn strong_regularization_bounds_separable_weights() {
        let rows = vec![vec![0.0], vec![1.0]];
        let obj = LogisticObjective::new(&rows, &[0, 1], &[1.0, 1.0], 1e-4);
        let (theta, _) = minimize_lbfgs(|t| obj.value_grad(t), vec![0.0, 0.0], 1000, 1e-6);
        assert!(theta[0].abs() < 1e-2);
        for x in [0.0, 1.0] {
            let p = sigmoid(theta[1] + theta[0] * x);
            assert!(p > 0.0 && p < 1.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn gradient_matches_central_differences(
            rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 4..30),
            bits in prop::collection::vec(0u8..2, 30),
            theta in prop::collection::vec(-2.0f64..2.0, 4),
            c in 0.01f64..100.0,
        ) {
            let labels = &bits[..rows.len()];
            let weights: Vec<f64> = labels.iter().map(|&y| 1.0 + f64::from(y)).collect();
            let obj = LogisticObjective::new(&rows, labels, &weights, c);
            let (_, g) = obj.value_grad(&theta);
            for k in 0..theta.len() {
                let h = 1e-5;
                let mut up = theta.clone();
                up[k] += h;
                let mut dn = theta.clone();
                dn[k] -= h;
                let fd = (obj.value_grad(&up).0 - obj.value_grad(&dn).0) / (2.0 * h);
                let scale = g[k].abs().max(fd.abs()).max(1e-3);
                prop_assert!((g[k] - fd).abs() / scale < 1e-4, "k {} analytic {} fd {}", k, g[k], fd);
            }
        }
    }
}
