//! Confusion-based metrics, ROC and precision-recall curves, and
//! waveform-to-cougher aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Counts with `p >= tau` predicted positive.
pub fn confusion_at(probs: &[f64], labels: &[bool], tau: f64) -> Result<ConfusionCounts> {
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            actual: labels.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= tau, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSuite {
    pub sens: Option<f64>,
    pub spec: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub uar: Option<f64>,
    pub youden_j: Option<f64>,
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
}

pub const METRIC_NAMES: [&str; 8] = [
    "sens", "spec", "ppv", "npv", "uar", "youden_j", "roc_auc", "pr_auc",
];

impl MetricSuite {
    /// Threshold-dependent fields only; AUCs are left empty.
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        let sens = ratio(c.tp, c.tp + c.fn_);
        let spec = ratio(c.tn, c.tn + c.fp);
        let (uar, youden_j) = match (sens, spec) {
            (Some(a), Some(b)) => (Some((a + b) / 2.0), Some(a + b - 1.0)),
            _ => (None, None),
        };
        Self {
            sens,
            spec,
            ppv: ratio(c.tp, c.tp + c.fp),
            npv: ratio(c.tn, c.tn + c.fn_),
            uar,
            youden_j,
            roc_auc: None,
            pr_auc: None,
        }
    }

    /// Counts at `tau` plus both AUCs, which are left empty for single-class
    /// labels.
    pub fn evaluate(probs: &[f64], labels: &[bool], tau: f64) -> Result<Self> {
        let mut m = Self::from_counts(&confusion_at(probs, labels, tau)?);
        m.roc_auc = roc_auc(probs, labels).ok();
        m.pr_auc = pr_auc(probs, labels).ok();
        Ok(m)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "sens" => self.sens,
            "spec" => self.spec,
            "ppv" => self.ppv,
            "npv" => self.npv,
            "uar" => self.uar,
            "youden_j" => self.youden_j,
            "roc_auc" => self.roc_auc,
            "pr_auc" => self.pr_auc,
            _ => None,
        }
    }
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let p = labels.iter().filter(|&&y| y).count();
    (p, labels.len() - p)
}

/// Area under the ROC curve: the Mann-Whitney statistic with ties as 1/2.
pub fn roc_auc(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            actual: labels.len(),
        });
    }
    let (np, nn) = class_counts(labels);
    if np == 0 || nn == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let np_f = np as f64;
    Ok((rank_sum - np_f * (np_f + 1.0) / 2.0) / (np_f * nn as f64))
}

/// Ordered `(x, y)` pairs of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoints {
    pub points: Vec<(f64, f64)>,
    /// Threshold producing each point; the first ROC point has +inf.
    pub thresholds: Vec<f64>,
}

impl CurvePoints {
    pub fn write_csv<W: std::io::Write>(&self, out: W, x: &str, y: &str) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record([x, y, "threshold"])?;
        for (&(a, b), t) in self.points.iter().zip(&self.thresholds) {
            wr.write_record([format!("{a:?}"), format!("{b:?}"), format!("{t:?}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Cumulative (tp, fp, threshold) at each distinct score, descending.
fn operating_points(probs: &[f64], labels: &[bool]) -> Vec<(usize, usize, f64)> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        if k + 1 == order.len() || probs[order[k + 1]] != probs[i] {
            out.push((tp, fp, probs[i]));
        }
    }
    out
}

/// (FPR, TPR) from (0, 0) to (1, 1), one point per distinct score.
pub fn roc_curve(probs: &[f64], labels: &[bool]) -> Result<CurvePoints> {
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            actual: labels.len(),
        });
    }
    let (np, nn) = class_counts(labels);
    if np == 0 || nn == 0 {
        return Err(Error::SingleClass);
    }
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    for (tp, fp, t) in operating_points(probs, labels) {
        points.push((fp as f64 / nn as f64, tp as f64 / np as f64));
        thresholds.push(t);
    }
    Ok(CurvePoints { points, thresholds })
}

/// Trapezoidal area under a ROC curve.
pub fn trapezoid_area(curve: &CurvePoints) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// (Recall, Precision) at each distinct score, descending threshold.
pub fn pr_curve(probs: &[f64], labels: &[bool]) -> Result<CurvePoints> {
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            actual: labels.len(),
        });
    }
    let (np, _) = class_counts(labels);
    if np == 0 {
        return Err(Error::InvalidArgument(
            "precision-recall needs a positive label".into(),
        ));
    }
    let mut points = Vec::new();
    let mut thresholds = Vec::new();
    for (tp, fp, t) in operating_points(probs, labels) {
        points.push((tp as f64 / np as f64, tp as f64 / (tp + fp) as f64));
        thresholds.push(t);
    }
    Ok(CurvePoints { points, thresholds })
}

/// Average precision: sum of (R_i - R_{i-1}) P_i over operating points.
pub fn pr_auc(probs: &[f64], labels: &[bool]) -> Result<f64> {
    let curve = pr_curve(probs, labels)?;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for &(r, p) in &curve.points {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    Ok(ap)
}

/// Mean probability per group, ordered by group key.
pub fn aggregate_cougher<K: Ord + Clone>(
    probs: &[f64],
    cougher_ids: &[K],
) -> Result<Vec<(K, f64)>> {
    if probs.len() != cougher_ids.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            actual: cougher_ids.len(),
        });
    }
    let mut acc: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for (p, id) in probs.iter().zip(cougher_ids) {
        let e = acc.entry(id.clone()).or_insert((0.0, 0));
        e.0 += p;
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect())
}
