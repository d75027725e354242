//! Histogram gradient-boosted trees on the weighted logistic loss.
//!
//! Inputs are binned once on the training rows (at most 256 bins per input;
//! missing values form their own bucket). Each split sends `v < threshold`
//! left and learns a default direction for missing values.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::encode::{Encoder, Matrix};
use crate::learners::logreg::sigmoid;
use crate::seed;

pub const MAX_BINS: usize = 256;
const MISSING_BIN: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    pub max_delta_step: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub colsample_bylevel: f64,
    pub gamma: f64,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 6,
            learning_rate: 0.3,
            min_child_weight: 1.0,
            max_delta_step: 0.0,
            subsample: 1.0,
            colsample_bytree: 1.0,
            colsample_bylevel: 1.0,
            gamma: 0.0,
            reg_alpha: 0.0,
            reg_lambda: 1.0,
        }
    }
}

impl GbdtParams {
    pub(crate) fn check(&self) -> Result<()> {
        let frac = |v: f64| v > 0.0 && v <= 1.0;
        let ok = self.learning_rate > 0.0
            && self.min_child_weight >= 0.0
            && self.max_delta_step >= 0.0
            && frac(self.subsample)
            && frac(self.colsample_bytree)
            && frac(self.colsample_bylevel)
            && self.gamma >= 0.0
            && self.reg_alpha >= 0.0
            && self.reg_lambda >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::LearnerSpec(format!("gbdt hyperparameters out of range: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        input: u32,
        threshold: f64,
        default_left: bool,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// Nodes in creation order; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn value(&self, m: &Matrix, row: usize) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    input,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let v = m.cols[*input as usize][row];
                    let go_left = if v.is_nan() { *default_left } else { v < *threshold };
                    at = if go_left { *left } else { *right } as usize;
                }
            }
        }
    }

    /// Split inputs and thresholds in node order.
    pub fn splits(&self) -> Vec<(u32, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { input, threshold, .. } => Some((*input, *threshold)),
                Node::Leaf { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base_margin: f64,
    pub scale_pos_weight: f64,
    /// Bin edges per encoded input, fitted on training rows.
    pub cuts: Vec<Vec<f64>>,
    pub trees: Vec<Tree>,
}

impl GbdtModel {
    pub fn margins(&self, m: &Matrix) -> Vec<f64> {
        (0..m.n_rows)
            .map(|i| self.base_margin + self.trees.iter().map(|t| t.value(m, i)).sum::<f64>())
            .collect()
    }

    pub fn scores(&self, m: &Matrix) -> Vec<f64> {
        self.margins(m).into_iter().map(sigmoid).collect()
    }
}

/// Midpoints between distinct values, or quantile edges when there are more
/// distinct values than bins.
pub fn bin_edges(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let mut distinct = v.clone();
    distinct.dedup();
    if distinct.len() <= MAX_BINS {
        return distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
    }
    let mut cuts: Vec<f64> = (1..MAX_BINS)
        .map(|k| {
            let pos = k * v.len() / MAX_BINS;
            let hi = v[pos];
            // edge just below the quantile value, between it and its predecessor
            let lo = distinct[distinct.partition_point(|&d| d < hi).saturating_sub(1)];
            if lo < hi {
                lo + (hi - lo) / 2.0
            } else {
                hi
            }
        })
        .collect();
    cuts.dedup();
    cuts.retain(|&c| c > distinct[0]);
    cuts
}

fn bin_of(cuts: &[f64], v: f64) -> u16 {
    if v.is_nan() {
        MISSING_BIN
    } else {
        cuts.partition_point(|&c| c <= v) as u16
    }
}

fn leaf_weight(g: f64, h: f64, p: &GbdtParams) -> f64 {
    let t = if g > p.reg_alpha {
        g - p.reg_alpha
    } else if g < -p.reg_alpha {
        g + p.reg_alpha
    } else {
        0.0
    };
    let w = -t / (h + p.reg_lambda);
    if p.max_delta_step > 0.0 {
        w.clamp(-p.max_delta_step, p.max_delta_step)
    } else {
        w
    }
}

/// Loss reduction achieved by the optimal weight of a node, doubled.
fn node_score(g: f64, h: f64, p: &GbdtParams) -> f64 {
    if h + p.reg_lambda <= 0.0 {
        return 0.0;
    }
    let w = leaf_weight(g, h, p);
    -(2.0 * g * w + (h + p.reg_lambda) * w * w + 2.0 * p.reg_alpha * w.abs())
}

struct Binned {
    /// `bins[input][k]` for the `k`-th training row.
    bins: Vec<Vec<u16>>,
    n_bins: Vec<usize>,
}

struct Split {
    gain: f64,
    input: usize,
    cut: usize,
    default_left: bool,
}

struct Grower<'a> {
    binned: &'a Binned,
    cuts: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbdtParams,
    level_inputs: Vec<Vec<usize>>,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn best_split(&self, rows: &[usize], depth: usize, g_tot: f64, h_tot: f64) -> Option<Split> {
        let p = self.params;
        let parent = node_score(g_tot, h_tot, p);
        let mut best: Option<Split> = None;
        for &f in &self.level_inputs[depth] {
            let nb = self.binned.n_bins[f];
            if nb < 2 {
                continue;
            }
            let bins = &self.binned.bins[f];
            let mut hg = vec![0.0; nb];
            let mut hh = vec![0.0; nb];
            let mut hc = vec![0usize; nb];
            let (mut mg, mut mh, mut mc) = (0.0, 0.0, 0usize);
            for &r in rows {
                let b = bins[r];
                if b == MISSING_BIN {
                    mg += self.grad[r];
                    mh += self.hess[r];
                    mc += 1;
                } else {
                    hg[b as usize] += self.grad[r];
                    hh[b as usize] += self.hess[r];
                    hc[b as usize] += 1;
                }
            }
            let (mut lg, mut lh, mut lc) = (0.0, 0.0, 0usize);
            let observed = rows.len() - mc;
            for k in 0..nb - 1 {
                lg += hg[k];
                lh += hh[k];
                lc += hc[k];
                if lc == 0 {
                    continue;
                }
                if lc == observed {
                    break;
                }
                // missing sent right first; left wins only on a strictly larger gain
                for default_left in [false, true] {
                    let (gl, hl, cl) = if default_left { (lg + mg, lh + mh, lc + mc) } else { (lg, lh, lc) };
                    let (gr, hr, cr) = (g_tot - gl, h_tot - hl, rows.len() - cl);
                    if cl == 0 || cr == 0 || hl < p.min_child_weight || hr < p.min_child_weight {
                        continue;
                    }
                    let gain = node_score(gl, hl, p) + node_score(gr, hr, p) - parent;
                    if gain > p.gamma && gain > 0.0 && best.as_ref().map_or(true, |b| gain > b.gain) {
                        best = Some(Split {
                            gain,
                            input: f,
                            cut: k,
                            default_left,
                        });
                    }
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        self.nodes.push(Node::Leaf {
            value: self.params.learning_rate * leaf_weight(g, h, self.params),
        });
        if depth >= self.params.max_depth {
            return id;
        }
        let Some(split) = self.best_split(&rows, depth, g, h) else {
            return id;
        };
        let bins = &self.binned.bins[split.input];
        let (left, right): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&r| {
            let b = bins[r];
            if b == MISSING_BIN {
                split.default_left
            } else {
                (b as usize) <= split.cut
            }
        });
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id as usize] = Node::Split {
            input: split.input as u32,
            threshold: self.cuts[split.input][split.cut],
            default_left: split.default_left,
            left: l,
            right: r,
        };
        id
    }
}

fn choose(rng: &mut impl Rng, from: &[usize], frac: f64) -> Vec<usize> {
    if frac >= 1.0 || from.is_empty() {
        return from.to_vec();
    }
    let k = ((frac * from.len() as f64).floor() as usize).clamp(1, from.len());
    let mut picked: Vec<usize> = sample(rng, from.len(), k).into_iter().map(|i| from[i]).collect();
    picked.sort_unstable();
    picked
}

/// Weighted mean logistic loss for given margins.
pub fn weighted_logloss(margins: &[f64], labels: &[u8], scale_pos_weight: f64) -> f64 {
    let mut total = 0.0;
    let mut weight = 0.0;
    for (&z, &y) in margins.iter().zip(labels) {
        let (s, l) = if y == 1 { (scale_pos_weight, softplus(-z)) } else { (1.0, softplus(z)) };
        total += s * l;
        weight += s;
    }
    total / weight
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Trains on sorted `train` rows. Also returns the weighted training loss
/// after each boosting round (entry 0 is the loss of the base score).
pub fn train(
    dataset: &Dataset,
    train: &[usize],
    params: &GbdtParams,
    seed: u64,
) -> Result<(Encoder, GbdtModel, Vec<f64>)> {
    params.check()?;
    let labels: Vec<u8> = train.iter().map(|&r| dataset.labels()[r]).collect();
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::Training("training rows contain a single class".into()));
    }
    let scale_pos_weight = (labels.len() - n_pos) as f64 / n_pos as f64;
    let encoder = Encoder::fit(dataset, train);
    let m = encoder.encode(dataset, train)?;
    let cuts: Vec<Vec<f64>> = m.cols.iter().map(|c| bin_edges(c)).collect();
    let binned = Binned {
        bins: m.cols.iter().zip(&cuts).map(|(c, k)| c.iter().map(|&v| bin_of(k, v)).collect()).collect(),
        n_bins: cuts.iter().map(|k| k.len() + 1).collect(),
    };
    let n = labels.len();
    let mut margins = vec![0.0; n];
    let mut model = GbdtModel {
        base_margin: 0.0,
        scale_pos_weight,
        cuts: cuts.clone(),
        trees: Vec::with_capacity(params.n_estimators),
    };
    let mut losses = vec![weighted_logloss(&margins, &labels, scale_pos_weight)];
    let mut rng = seed::rng(seed::derive_seed(seed, &["gbdt".into()]));
    let all_inputs: Vec<usize> = (0..m.n_cols()).collect();
    let all_rows: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..params.n_estimators {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            let s = if labels[i] == 1 { scale_pos_weight } else { 1.0 };
            grad[i] = s * (p - f64::from(labels[i]));
            hess[i] = s * (p * (1.0 - p)).max(1e-16);
        }
        let rows: Vec<usize> = if params.subsample < 1.0 {
            all_rows.iter().copied().filter(|_| rng.gen::<f64>() < params.subsample).collect()
        } else {
            all_rows.clone()
        };
        let tree_inputs = choose(&mut rng, &all_inputs, params.colsample_bytree);
        let level_inputs = (0..params.max_depth)
            .map(|_| choose(&mut rng, &tree_inputs, params.colsample_bylevel))
            .collect();
        let mut grower = Grower {
            binned: &binned,
            cuts: &cuts,
            grad: &grad,
            hess: &hess,
            params,
            level_inputs,
            nodes: Vec::new(),
        };
        grower.grow(rows, 0);
        let tree = Tree { nodes: grower.nodes };
        for (i, mg) in margins.iter_mut().enumerate() {
            *mg += tree.value(&m, i);
        }
        model.trees.push(tree);
        losses.push(weighted_logloss(&margins, &labels, scale_pos_weight));
    }
    Ok((encoder, model, losses))
}
