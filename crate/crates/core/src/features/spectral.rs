//! Frame-wise spectral shape descriptors.
//!
//! All descriptors return 0 for an all-zero frame.

use crate::dsp::MagnitudeSpectra;

/// Order of the bandwidth moment.
pub const BANDWIDTH_ORDER: f64 = 2.0;
pub const ROLLOFF_FRACTION: f64 = 0.85;
/// Power floor used before taking logs in the flatness measure.
pub const FLATNESS_FLOOR: f64 = 1e-10;

fn is_silent(row: &[f64]) -> bool {
    row.iter().all(|&v| v == 0.0)
}

fn centroid_of(row: &[f64], freqs: &[f64]) -> f64 {
    let mass: f64 = row.iter().sum();
    if mass <= 0.0 {
        return 0.0;
    }
    row.iter().zip(freqs).map(|(x, f)| x * f).sum::<f64>() / mass
}

/// Magnitude-weighted mean frequency per frame (Hz).
pub fn spectral_centroid(spectra: &MagnitudeSpectra) -> Vec<f64> {
    spectra
        .rows()
        .map(|row| centroid_of(row, spectra.bin_freqs()))
        .collect()
}

/// `(sum_k X[k] |f[k] - C|^p)^(1/p)`, not normalised by total magnitude.
pub fn spectral_bandwidth(spectra: &MagnitudeSpectra, p: f64) -> Vec<f64> {
    let freqs = spectra.bin_freqs();
    spectra
        .rows()
        .map(|row| {
            if is_silent(row) {
                return 0.0;
            }
            let c = centroid_of(row, freqs);
            row.iter()
                .zip(freqs)
                .map(|(x, f)| x * (f - c).abs().powf(p))
                .sum::<f64>()
                .powf(1.0 / p)
        })
        .collect()
}

/// Lowest bin frequency at which cumulative energy reaches `fraction` of the
/// frame's total energy (squared magnitudes).
pub fn spectral_rolloff(spectra: &MagnitudeSpectra, fraction: f64) -> Vec<f64> {
    assert!(
        fraction > 0.0 && fraction < 1.0,
        "roll-off fraction must lie in (0, 1)"
    );
    let freqs = spectra.bin_freqs();
    spectra
        .rows()
        .map(|row| {
            let total: f64 = row.iter().map(|x| x * x).sum();
            if total <= 0.0 {
                return 0.0;
            }
            // relative slack absorbs rounding in the running sum
            let target = fraction * total * (1.0 - 1e-12);
            let mut acc = 0.0;
            for (x, f) in row.iter().zip(freqs) {
                acc += x * x;
                if acc >= target {
                    return *f;
                }
            }
            *freqs.last().unwrap()
        })
        .collect()
}

/// Geometric over arithmetic mean of the floored power spectrum.
pub fn spectral_flatness(spectra: &MagnitudeSpectra) -> Vec<f64> {
    spectra
        .rows()
        .map(|row| {
            if is_silent(row) {
                return 0.0;
            }
            let n = row.len() as f64;
            let (mut log_sum, mut sum) = (0.0, 0.0);
            for x in row {
                let p = (x * x).max(FLATNESS_FLOOR);
                log_sum += p.ln();
                sum += p;
            }
            let flatness = (log_sum / n).exp() / (sum / n);
            flatness.clamp(0.0, 1.0)
        })
        .collect()
}
