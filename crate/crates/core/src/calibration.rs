//! Isotonic calibration, calibration diagnostics and Youden operating points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ECE_BINS: usize = 10;

fn check_aligned(probs: &[f64], labels: &[bool]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            actual: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(Error::EmptyInput("probabilities"));
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("probabilities"));
    }
    Ok(())
}

fn check_two_classes(labels: &[bool]) -> Result<()> {
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Monotone score-to-probability map. Linear between breakpoints, clamped
/// to the end values outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicMap {
    breakpoints: Vec<(f64, f64)>,
}

impl IsotonicMap {
    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn apply_one(&self, s: f64) -> f64 {
        let bp = &self.breakpoints;
        let first = bp[0];
        let last = bp[bp.len() - 1];
        if s <= first.0 {
            return first.1;
        }
        if s >= last.0 {
            return last.1;
        }
        // first index with x > s; s lies in [bp[i-1].0, bp[i].0)
        let i = bp.partition_point(|&(x, _)| x <= s);
        let (x0, y0) = bp[i - 1];
        let (x1, y1) = bp[i];
        if s == x0 {
            return y0;
        }
        y0 + (y1 - y0) * (s - x0) / (x1 - x0)
    }

    pub fn apply(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&s| self.apply_one(s)).collect()
    }
}

/// Weighted pool-adjacent-violators. Returns the fitted value of each input.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let n = blocks.len();
            if blocks[n - 2].0 <= blocks[n - 1].0 {
                break;
            }
            let (m2, w2, l2) = blocks.pop().unwrap();
            let (m1, w1, l1) = blocks.pop().unwrap();
            let w = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / w, w, l1 + l2));
        }
    }
    blocks
        .iter()
        .flat_map(|&(m, _, l)| std::iter::repeat_n(m, l))
        .collect()
}

/// Least-squares nondecreasing fit of labels against scores. Equal scores
/// are pooled before fitting.
pub fn fit_isotonic(scores: &[f64], labels: &[bool]) -> Result<IsotonicMap> {
    check_aligned(scores, labels)?;
    if scores.len() < 2 {
        return Err(Error::InvalidArgument(
            "isotonic fit needs at least 2 samples".into(),
        ));
    }
    check_two_classes(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut xs = Vec::new();
    let mut means = Vec::new();
    let mut weights = Vec::new();
    for &i in &order {
        let y = if labels[i] { 1.0 } else { 0.0 };
        if xs.last() == Some(&scores[i]) {
            let k = xs.len() - 1;
            means[k] = (means[k] * weights[k] + y) / (weights[k] + 1.0);
            weights[k] += 1.0;
        } else {
            xs.push(scores[i]);
            means.push(y);
            weights.push(1.0);
        }
    }
    let fitted = pava(&means, &weights);
    Ok(IsotonicMap {
        breakpoints: xs
            .into_iter()
            .zip(fitted.into_iter().map(|v| v.clamp(0.0, 1.0)))
            .collect(),
    })
}

pub fn brier(probs: &[f64], labels: &[bool]) -> Result<f64> {
    check_aligned(probs, labels)?;
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| (p - if y { 1.0 } else { 0.0 }).powi(2))
        .sum();
    Ok(sum / probs.len() as f64)
}

/// One equal-width bin of a reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub center: f64,
    pub mean_confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

fn bin_index(p: f64, n_bins: usize) -> usize {
    ((p.clamp(0.0, 1.0) * n_bins as f64).floor() as usize).min(n_bins - 1)
}

/// Equal-width bins on [0, 1]; the last bin is closed on the right.
/// Empty bins report zero confidence and accuracy.
pub fn reliability_bins(
    probs: &[f64],
    labels: &[bool],
    n_bins: usize,
) -> Result<Vec<ReliabilityBin>> {
    if n_bins < 1 {
        return Err(Error::InvalidArgument("n_bins must be at least 1".into()));
    }
    check_aligned(probs, labels)?;
    let mut sum_p = vec![0.0; n_bins];
    let mut sum_y = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    for (&p, &y) in probs.iter().zip(labels) {
        let b = bin_index(p, n_bins);
        sum_p[b] += p;
        sum_y[b] += if y { 1.0 } else { 0.0 };
        count[b] += 1;
    }
    Ok((0..n_bins)
        .map(|b| {
            let c = count[b].max(1) as f64;
            ReliabilityBin {
                center: (b as f64 + 0.5) / n_bins as f64,
                mean_confidence: sum_p[b] / c,
                accuracy: sum_y[b] / c,
                count: count[b],
            }
        })
        .collect())
}

/// Expected calibration error over equal-width bins.
pub fn ece(probs: &[f64], labels: &[bool], n_bins: usize) -> Result<f64> {
    let bins = reliability_bins(probs, labels, n_bins)?;
    let n = probs.len() as f64;
    Ok(bins
        .iter()
        .map(|b| b.count as f64 / n * (b.accuracy - b.mean_confidence).abs())
        .sum())
}

/// Writes `bin_center,mean_confidence,accuracy,count` CSV.
pub fn write_reliability_csv<W: std::io::Write>(out: W, bins: &[ReliabilityBin]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(["bin_center", "mean_confidence", "accuracy", "count"])?;
    for b in bins {
        wr.write_record([
            format!("{:?}", b.center),
            format!("{:?}", b.mean_confidence),
            format!("{:?}", b.accuracy),
            b.count.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Waveform,
    Cougher,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Waveform => "waveform",
            Level::Cougher => "cougher",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub level: Level,
    pub n_bins: usize,
    pub brier_raw: f64,
    pub brier_cal: f64,
    pub ece_raw: f64,
    pub ece_cal: f64,
}

impl CalibrationReport {
    pub fn compute(
        level: Level,
        raw: &[f64],
        calibrated: &[f64],
        labels: &[bool],
        n_bins: usize,
    ) -> Result<Self> {
        Ok(Self {
            level,
            n_bins,
            brier_raw: brier(raw, labels)?,
            brier_cal: brier(calibrated, labels)?,
            ece_raw: ece(raw, labels, n_bins)?,
            ece_cal: ece(calibrated, labels, n_bins)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoudenPoint {
    pub tau: f64,
    pub j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub tau_w: f64,
    pub tau_s: f64,
    pub j_w: f64,
    pub j_s: f64,
}

/// Threshold maximising sensitivity + specificity − 1 under `p >= tau`.
///
/// Candidates are 0, 1 and midpoints between consecutive distinct values.
/// J is compared exactly in integer arithmetic; ties go to the lower
/// threshold.
pub fn youden_threshold(probs: &[f64], labels: &[bool]) -> Result<YoudenPoint> {
    check_aligned(probs, labels)?;
    check_two_classes(labels)?;
    let mut pos: Vec<f64> = Vec::new();
    let mut neg: Vec<f64> = Vec::new();
    for (&p, &y) in probs.iter().zip(labels) {
        if y {
            pos.push(p)
        } else {
            neg.push(p)
        }
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = probs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut candidates = vec![0.0];
    candidates.extend(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(1.0);

    let (np, nn) = (pos.len() as i128, neg.len() as i128);
    let at_least = |v: &[f64], tau: f64| (v.len() - v.partition_point(|&x| x < tau)) as i128;
    let mut best: Option<(i128, f64, i128, i128)> = None;
    for &tau in &candidates {
        let tp = at_least(&pos, tau);
        let fp = at_least(&neg, tau);
        let score = tp * nn - fp * np;
        let better = match best {
            None => true,
            Some((s, t, _, _)) => score > s || (score == s && tau < t),
        };
        if better {
            best = Some((score, tau, tp, fp));
        }
    }
    let (_, tau, tp, fp) = best.expect("candidates are nonempty");
    Ok(YoudenPoint {
        tau,
        j: tp as f64 / np as f64 - fp as f64 / nn as f64,
    })
}
