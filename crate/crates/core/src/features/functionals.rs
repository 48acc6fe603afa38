//! Distributional summaries of a per-frame feature trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_FUNCTIONALS: usize = 9;
pub const FUNCTIONAL_NAMES: [&str; N_FUNCTIONALS] = [
    "mean", "std", "skew", "kurt", "p10", "p25", "p50", "p75", "p90",
];
const PERCENTILES: [f64; 5] = [0.10, 0.25, 0.50, 0.75, 0.90];

/// Nine functionals in fixed order: mean, std, skewness, kurtosis and the
/// 10/25/50/75/90th percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryFunctionals {
    pub mu: f64,
    pub sigma: f64,
    pub skew: f64,
    pub kurt: f64,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub len: usize,
}

impl SummaryFunctionals {
    pub fn to_array(&self) -> [f64; N_FUNCTIONALS] {
        [
            self.mu, self.sigma, self.skew, self.kurt, self.p10, self.p25, self.p50, self.p75,
            self.p90,
        ]
    }
}

/// Percentile by linear interpolation between closest ranks of sorted data.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Summarises a trajectory of `L >= 1` values.
///
/// * sigma uses the `L - 1` denominator (0 when `L = 1`);
/// * skewness is `sqrt(L(L-1))/(L-2) * m3 / m2^(3/2)` with population
///   central moments `m2`, `m3` (0 when `L < 3` or sigma is 0);
/// * kurtosis is `(L+1)L / ((L-1)^3 (L-2)(L-3)) * sum (x - mu)^4 / sigma^4
///   - 3 (L-1)^2 / ((L-2)(L-3))` (0 when `L < 4` or sigma is 0).
///
/// Sigma below `1e-12` times the largest magnitude is treated as 0.
pub fn summarize(trajectory: &[f64]) -> Result<SummaryFunctionals> {
    if trajectory.is_empty() {
        return Err(Error::EmptyInput("trajectory"));
    }
    if trajectory.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("trajectory"));
    }
    let n = trajectory.len();
    let l = n as f64;
    let mu = trajectory.iter().sum::<f64>() / l;
    let (mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0);
    for &x in trajectory {
        let d = x - mu;
        let d2 = d * d;
        s2 += d2;
        s3 += d2 * d;
        s4 += d2 * d2;
    }
    let sigma = if n > 1 { (s2 / (l - 1.0)).sqrt() } else { 0.0 };
    // spread at rounding level (e.g. a constant trajectory whose mean is off
    // by an ulp) counts as zero variance
    let scale = trajectory.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let degenerate = sigma <= 1e-12 * scale || s2 == 0.0;

    let skew = if n < 3 || degenerate {
        0.0
    } else {
        let m2 = s2 / l;
        let m3 = s3 / l;
        (l * (l - 1.0)).sqrt() / (l - 2.0) * m3 / m2.powf(1.5)
    };

    let kurt = if n < 4 || degenerate {
        0.0
    } else {
        let lead = (l + 1.0) * l / ((l - 1.0).powi(3) * (l - 2.0) * (l - 3.0));
        let correction = 3.0 * (l - 1.0).powi(2) / ((l - 2.0) * (l - 3.0));
        lead * s4 / sigma.powi(4) - correction
    };

    let mut sorted = trajectory.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p = PERCENTILES.map(|q| percentile_sorted(&sorted, q));

    Ok(SummaryFunctionals {
        mu,
        sigma,
        skew,
        kurt,
        p10: p[0],
        p25: p[1],
        p50: p[2],
        p75: p[3],
        p90: p[4],
        len: n,
    })
}
