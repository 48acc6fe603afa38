//! Gradient-boosted regression trees on the logistic loss.
//!
//! Features are quantised into at most `max_bins` histogram bins. Each round
//! fits a depth-limited tree to the weighted residuals `y - p` of a Bernoulli
//! row sample restricted to a random feature subset, then adds
//! `learning_rate * h` to the raw score.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_training, class_weights, sigmoid, ClassWeight};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_MAX_BINS: usize = 254;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub depth: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2_leaf_reg: f64,
    /// Bernoulli row-sampling rate per round.
    pub subsample: f64,
    /// Fraction of features available to each tree.
    pub rsm: f64,
    pub class_weight: ClassWeight,
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.depth == 0 || self.depth > 16 {
            return bad(format!("depth must lie in 1..=16, got {}", self.depth));
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        if self.l2_leaf_reg.is_nan() || self.l2_leaf_reg < 0.0 {
            return bad(format!(
                "l2_leaf_reg must be non-negative, got {}",
                self.l2_leaf_reg
            ));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) || !(self.rsm > 0.0 && self.rsm <= 1.0)
        {
            return bad("subsample and rsm must lie in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Tree stored as a node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub params: GbdtParams,
    pub n_features: usize,
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub seed: u64,
}

impl GbdtModel {
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.base_score
            + self
                .trees
                .iter()
                .map(|t| self.params.learning_rate * t.predict_row(row))
                .sum::<f64>()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.cols(),
            });
        }
        Ok(x.iter_rows().map(|r| sigmoid(self.raw_score(r))).collect())
    }
}

/// Split borders of one feature: midpoints between distinct values, thinned
/// to quantiles when there are more than `max_bins` distinct values.
pub fn feature_borders(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let n = sorted.len();
    let mut borders: Vec<f64> = (1..max_bins)
        .filter_map(|k| {
            let idx = k * n / max_bins;
            let (a, b) = (sorted[idx - 1], sorted[idx]);
            (a < b).then_some(0.5 * (a + b))
        })
        .collect();
    borders.dedup();
    borders
}

/// Training matrix quantised column by column.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    n_rows: usize,
    borders: Vec<Vec<f64>>,
    /// `bins[f][i]`: number of borders of feature `f` strictly below `x[i][f]`.
    bins: Vec<Vec<u8>>,
}

impl BinnedMatrix {
    pub fn new(x: &Matrix, max_bins: usize) -> Result<Self> {
        if !(2..=256).contains(&max_bins) {
            return Err(Error::InvalidArgument(
                "max_bins must lie in 2..=256".into(),
            ));
        }
        let mut borders = Vec::with_capacity(x.cols());
        let mut bins = Vec::with_capacity(x.cols());
        for f in 0..x.cols() {
            let col: Vec<f64> = (0..x.rows()).map(|i| x.get(i, f)).collect();
            let b = feature_borders(&col, max_bins);
            bins.push(
                col.iter()
                    .map(|&v| b.partition_point(|&t| t < v) as u8)
                    .collect(),
            );
            borders.push(b);
        }
        Ok(Self {
            n_rows: x.rows(),
            borders,
            bins,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.borders.len()
    }

    pub fn borders(&self, f: usize) -> &[f64] {
        &self.borders[f]
    }

    /// Routes a training row down a tree using its bins.
    fn predict_binned(&self, tree: &BinnedTree, i: usize) -> f64 {
        let mut n = 0;
        loop {
            match tree.nodes[n] {
                BinnedNode::Leaf(v) => return v,
                BinnedNode::Split {
                    feature,
                    bin,
                    left,
                    right,
                } => {
                    n = if self.bins[feature][i] as usize <= bin {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }
}

enum BinnedNode {
    Split {
        feature: usize,
        bin: usize,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

struct BinnedTree {
    nodes: Vec<BinnedNode>,
}

/// `(sum of w * r)^2 / (sum of w + lambda)`.
fn node_score(g: f64, h: f64, lambda: f64) -> f64 {
    if h + lambda <= 0.0 {
        0.0
    } else {
        g * g / (h + lambda)
    }
}

struct TreeBuilder<'a> {
    data: &'a BinnedMatrix,
    /// Weighted residuals and weights of every training row.
    wr: &'a [f64],
    w: &'a [f64],
    features: &'a [usize],
    lambda: f64,
    max_depth: usize,
    nodes: Vec<BinnedNode>,
}

impl TreeBuilder<'_> {
    fn leaf(&mut self, g: f64, h: f64) -> usize {
        let v = if h + self.lambda > 0.0 {
            g / (h + self.lambda)
        } else {
            0.0
        };
        self.nodes.push(BinnedNode::Leaf(v));
        self.nodes.len() - 1
    }

    fn best_split(&self, rows: &[usize], g: f64, h: f64) -> Option<(usize, usize, f64)> {
        let parent = node_score(g, h, self.lambda);
        let mut best: Option<(usize, usize, f64)> = None;
        let mut hist_g = [0.0f64; 256];
        let mut hist_h = [0.0f64; 256];
        for &f in self.features {
            let nb = self.data.borders[f].len() + 1;
            if nb < 2 {
                continue;
            }
            hist_g[..nb].iter_mut().for_each(|v| *v = 0.0);
            hist_h[..nb].iter_mut().for_each(|v| *v = 0.0);
            let col = &self.data.bins[f];
            for &i in rows {
                let b = col[i] as usize;
                hist_g[b] += self.wr[i];
                hist_h[b] += self.w[i];
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for b in 0..nb - 1 {
                // an empty bin repeats the previous partition, which already won ties
                if hist_h[b] == 0.0 {
                    continue;
                }
                gl += hist_g[b];
                hl += hist_h[b];
                let (gr, hr) = (g - gl, h - hl);
                if hl <= 0.0 || hr <= 0.0 {
                    continue;
                }
                let gain =
                    node_score(gl, hl, self.lambda) + node_score(gr, hr, self.lambda) - parent;
                if gain > 1e-12 * parent.abs().max(1e-300)
                    && best.is_none_or(|(_, _, bg)| gain > bg)
                {
                    best = Some((f, b, gain));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&i| self.wr[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.w[i]).sum();
        if depth == self.max_depth || rows.len() < 2 {
            return self.leaf(g, h);
        }
        let Some((feature, bin, _)) = self.best_split(&rows, g, h) else {
            return self.leaf(g, h);
        };
        let col = &self.data.bins[feature];
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] as usize <= bin);
        let idx = self.nodes.len();
        self.nodes.push(BinnedNode::Leaf(0.0));
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[idx] = BinnedNode::Split {
            feature,
            bin,
            left,
            right,
        };
        idx
    }
}

fn logloss(scores: &[f64], y: &[bool], w: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut wsum = 0.0;
    for i in 0..y.len() {
        let z = if y[i] { -scores[i] } else { scores[i] };
        s += w[i] * super::softplus(z);
        wsum += w[i];
    }
    s / wsum
}

/// Per-round diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    /// Weighted training logloss after each round, starting with the base score.
    pub logloss: Vec<f64>,
    /// Weighted residual sums of positives and negatives in round 1.
    pub root_residual_sums: (f64, f64),
}

pub fn fit_gbdt(x: &Matrix, y: &[bool], params: &GbdtParams, seed: u64) -> Result<GbdtModel> {
    let binned = BinnedMatrix::new(x, DEFAULT_MAX_BINS)?;
    check_training(x, y)?;
    fit_gbdt_binned(&binned, y, params, seed).map(|(m, _)| m)
}

/// Fits on pre-quantised data, so several candidates can share one binning.
pub fn fit_gbdt_binned(
    data: &BinnedMatrix,
    y: &[bool],
    params: &GbdtParams,
    seed: u64,
) -> Result<(GbdtModel, TrainingTrace)> {
    params.validate()?;
    if y.len() != data.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: data.n_rows(),
            actual: y.len(),
        });
    }
    let n_pos = y.iter().filter(|&&v| v).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(Error::SingleClass);
    }
    let w = class_weights(y, params.class_weight);
    let wsum: f64 = w.iter().sum();
    let wpos: f64 = y
        .iter()
        .zip(&w)
        .filter(|(&v, _)| v)
        .map(|(_, &wi)| wi)
        .sum();
    let p0 = wpos / wsum;
    let base_score = (p0 / (1.0 - p0)).ln();

    let n = y.len();
    let d = data.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.iterations);
    let mut trace = TrainingTrace {
        logloss: vec![logloss(&scores, y, &w)],
        root_residual_sums: (0.0, 0.0),
    };
    let n_feat = ((params.rsm * d as f64).ceil() as usize).clamp(1, d.max(1));
    let mut wr = vec![0.0; n];
    let mut w_round = vec![0.0; n];
    for t in 0..params.iterations {
        let mut features: Vec<usize> = if n_feat == d {
            (0..d).collect()
        } else {
            sample(&mut rng, d, n_feat).into_vec()
        };
        features.sort_unstable();
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let take = params.subsample >= 1.0 || rng.random::<f64>() < params.subsample;
            let p = sigmoid(scores[i]);
            let r = if y[i] { 1.0 - p } else { -p };
            wr[i] = w[i] * r;
            w_round[i] = w[i];
            if take {
                rows.push(i);
            }
        }
        if t == 0 {
            let pos: f64 = (0..n).filter(|&i| y[i]).map(|i| wr[i]).sum();
            let neg: f64 = (0..n).filter(|&i| !y[i]).map(|i| wr[i]).sum();
            trace.root_residual_sums = (pos, neg);
        }
        let mut b = TreeBuilder {
            data,
            wr: &wr,
            w: &w_round,
            features: &features,
            lambda: params.l2_leaf_reg,
            max_depth: params.depth,
            nodes: Vec::new(),
        };
        if rows.is_empty() {
            b.nodes.push(BinnedNode::Leaf(0.0));
        } else {
            b.grow(rows, 0);
        }
        let tree = BinnedTree { nodes: b.nodes };
        for (i, s) in scores.iter_mut().enumerate() {
            *s += params.learning_rate * data.predict_binned(&tree, i);
        }
        trace.logloss.push(logloss(&scores, y, &w));
        trees.push(Tree {
            nodes: tree
                .nodes
                .into_iter()
                .map(|nd| match nd {
                    BinnedNode::Leaf(value) => Node::Leaf { value },
                    BinnedNode::Split {
                        feature,
                        bin,
                        left,
                        right,
                    } => Node::Split {
                        feature,
                        threshold: data.borders[feature][bin],
                        left,
                        right,
                    },
                })
                .collect(),
        });
    }
    Ok((
        GbdtModel {
            params: *params,
            n_features: d,
            base_score,
            trees,
            seed,
        },
        trace,
    ))
}
