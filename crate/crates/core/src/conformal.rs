//! Split conformal prediction on cougher-level probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::aggregate_cougher;

/// `1 - p_y`: the probability mass the model puts on the other label.
pub fn nonconformity(p_pos: f64, label: bool) -> f64 {
    if label {
        1.0 - p_pos
    } else {
        p_pos
    }
}

/// Cougher-level probabilities with labels. Only constructible by
/// averaging waveform probabilities per cougher, so conformal routines
/// cannot be handed waveform-level inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CougherScores {
    ids: Vec<String>,
    p_pos: Vec<f64>,
    labels: Vec<bool>,
}

impl CougherScores {
    /// Means of `waveform_probs` per cougher, sorted by cougher id. Every
    /// waveform of a cougher must carry the same label.
    pub fn aggregate(
        waveform_probs: &[f64],
        cougher_ids: &[String],
        labels: &[bool],
    ) -> Result<Self> {
        if labels.len() != waveform_probs.len() {
            return Err(Error::DimensionMismatch {
                expected: waveform_probs.len(),
                actual: labels.len(),
            });
        }
        if waveform_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        let means = aggregate_cougher(waveform_probs, cougher_ids)?;
        let label_of = aggregate_cougher(
            &labels
                .iter()
                .map(|&y| if y { 1.0 } else { 0.0 })
                .collect::<Vec<_>>(),
            cougher_ids,
        )?;
        let mut out = Self {
            ids: Vec::with_capacity(means.len()),
            p_pos: Vec::with_capacity(means.len()),
            labels: Vec::with_capacity(means.len()),
        };
        for ((id, p), (_, y)) in means.into_iter().zip(label_of) {
            if y != 0.0 && y != 1.0 {
                return Err(Error::CougherConflict {
                    cougher: id,
                    field: "tb_label",
                });
            }
            out.ids.push(id);
            out.p_pos.push(p);
            out.labels.push(y == 1.0);
        }
        Ok(out)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn p_pos(&self) -> &[f64] {
        &self.p_pos
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub alpha: f64,
    /// Order-statistic index, 1-based; may exceed n.
    pub k: usize,
    pub q_hat: f64,
}

/// `ceil((n + 1)(1 - alpha))`, with products that land within 1e-9 of an
/// integer treated as that integer.
pub fn order_index(n: usize, alpha: f64) -> usize {
    let x = (n as f64 + 1.0) * (1.0 - alpha);
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// q̂ from ascending scores; 1 when the order index exceeds n.
pub fn quantile_from_sorted(sorted_scores: &[f64], alpha: f64) -> Result<QuantileFit> {
    if sorted_scores.is_empty() {
        return Err(Error::EmptyInput("calibration scores"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let n = sorted_scores.len();
    let k = order_index(n, alpha);
    let q_hat = if k > n {
        1.0
    } else {
        sorted_scores[k.max(1) - 1]
    };
    Ok(QuantileFit { alpha, k, q_hat })
}

pub fn fit_quantile(calib: &CougherScores, alpha: f64) -> Result<QuantileFit> {
    ConformalCalibrator::fit(calib, &[alpha]).map(|c| c.quantiles[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalCalibrator {
    pub sorted_scores: Vec<f64>,
    pub quantiles: Vec<QuantileFit>,
}

impl ConformalCalibrator {
    pub fn fit(calib: &CougherScores, alphas: &[f64]) -> Result<Self> {
        if calib.is_empty() {
            return Err(Error::EmptyInput("calibration subset"));
        }
        let mut sorted_scores: Vec<f64> = calib
            .p_pos
            .iter()
            .zip(&calib.labels)
            .map(|(&p, &y)| nonconformity(p, y))
            .collect();
        sorted_scores.sort_by(f64::total_cmp);
        let quantiles = alphas
            .iter()
            .map(|&a| quantile_from_sorted(&sorted_scores, a))
            .collect::<Result<_>>()?;
        Ok(Self {
            sorted_scores,
            quantiles,
        })
    }

    pub fn q_hat(&self, alpha: f64) -> Option<f64> {
        self.quantiles
            .iter()
            .find(|q| q.alpha == alpha)
            .map(|q| q.q_hat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub positive: bool,
    pub negative: bool,
    pub p_pos: f64,
}

impl PredictionSet {
    pub fn size(&self) -> usize {
        self.positive as usize + self.negative as usize
    }

    pub fn contains(&self, label: bool) -> bool {
        if label {
            self.positive
        } else {
            self.negative
        }
    }

    pub fn is_singleton(&self) -> bool {
        self.size() == 1
    }
}

/// A label is kept when its probability is at least `1 - q_hat`.
pub fn predict_set(p_pos: f64, q_hat: f64) -> PredictionSet {
    let bar = 1.0 - q_hat;
    PredictionSet {
        positive: p_pos >= bar,
        negative: 1.0 - p_pos >= bar,
        p_pos,
    }
}

pub fn predict_sets(scores: &CougherScores, q_hat: f64) -> Vec<PredictionSet> {
    scores
        .p_pos
        .iter()
        .map(|&p| predict_set(p, q_hat))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetEvaluation {
    pub n: usize,
    pub coverage: f64,
    pub mean_size: f64,
    pub singleton_rate: f64,
    pub empty_rate: f64,
}

pub fn evaluate_sets(sets: &[PredictionSet], labels: &[bool]) -> Result<SetEvaluation> {
    if sets.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: sets.len(),
            actual: labels.len(),
        });
    }
    if sets.is_empty() {
        return Err(Error::EmptyInput("prediction sets"));
    }
    let n = sets.len() as f64;
    let frac = |f: &dyn Fn(&PredictionSet, bool) -> bool| {
        sets.iter().zip(labels).filter(|(s, &y)| f(s, y)).count() as f64 / n
    };
    Ok(SetEvaluation {
        n: sets.len(),
        coverage: frac(&|s, y| s.contains(y)),
        mean_size: sets.iter().map(|s| s.size() as f64).sum::<f64>() / n,
        singleton_rate: frac(&|s, _| s.is_singleton()),
        empty_rate: frac(&|s, _| s.size() == 0),
    })
}

/// Point accuracy split by whether the conformal set commits to one label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectiveMetrics {
    pub n: usize,
    pub n_singleton: usize,
    pub n_ambiguous: usize,
    pub accuracy: f64,
    pub acc_singleton: Option<f64>,
    pub acc_ambiguous: Option<f64>,
    pub p_singleton_given_correct: Option<f64>,
}

pub fn selective_metrics(
    point_preds: &[bool],
    sets: &[PredictionSet],
    labels: &[bool],
) -> Result<SelectiveMetrics> {
    if point_preds.len() != labels.len() || sets.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: point_preds.len().min(sets.len()),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("selective evaluation"));
    }
    let (mut correct, mut single, mut single_ok, mut amb, mut amb_ok) = (0, 0, 0, 0, 0);
    for ((&p, s), &y) in point_preds.iter().zip(sets).zip(labels) {
        let ok = p == y;
        correct += ok as usize;
        if s.is_singleton() {
            single += 1;
            single_ok += ok as usize;
        } else if s.size() == 2 {
            amb += 1;
            amb_ok += ok as usize;
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(SelectiveMetrics {
        n: labels.len(),
        n_singleton: single,
        n_ambiguous: amb,
        accuracy: correct as f64 / labels.len() as f64,
        acc_singleton: ratio(single_ok, single),
        acc_ambiguous: ratio(amb_ok, amb),
        p_singleton_given_correct: ratio(single_ok, correct),
    })
}
