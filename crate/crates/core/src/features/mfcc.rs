//! Mel-frequency cepstral coefficients.
//!
//! power spectrum -> triangular mel filterbank (Slaney mel scale, area
//! normalised) -> natural log with a floor -> orthonormal DCT-II.

use crate::dsp::MagnitudeSpectra;

pub const N_MFCC: usize = 13;
/// Filter count; a tunable, not part of the fixed analysis parameters.
pub const DEFAULT_N_MELS: usize = 40;
pub const LOG_FLOOR: f64 = 1e-10;

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < MIN_LOG_HZ {
        hz / F_SP
    } else {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < MIN_LOG_MEL {
        mel * F_SP
    } else {
        MIN_LOG_HZ * (log_step() * (mel - MIN_LOG_MEL)).exp()
    }
}

/// Dense `n_mels x n_bins` triangular filterbank.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, bin_freqs: &[f64], f_min: f64, f_max: f64) -> Self {
        let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let weights = (0..n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let norm = 2.0 / (hi - lo);
                bin_freqs
                    .iter()
                    .map(|&f| {
                        let rising = (f - lo) / (mid - lo);
                        let falling = (hi - f) / (hi - mid);
                        rising.min(falling).max(0.0) * norm
                    })
                    .collect()
            })
            .collect();
        Self { weights }
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(power).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Orthonormal DCT-II, first `n_out` coefficients.
pub fn dct2_ortho(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .sum();
            scale * s
        })
        .collect()
}

/// Per-frame MFCCs, `L` rows of `n_mfcc` coefficients (coefficient 0 kept).
pub fn mfcc(spectra: &MagnitudeSpectra, n_mfcc: usize, n_mels: usize) -> Vec<Vec<f64>> {
    let nyquist = spectra.sample_rate_hz() as f64 / 2.0;
    let bank = MelFilterbank::new(n_mels, spectra.bin_freqs(), 0.0, nyquist);
    spectra
        .rows()
        .map(|row| {
            let power: Vec<f64> = row.iter().map(|x| x * x).collect();
            let log_mel: Vec<f64> = bank
                .apply(&power)
                .into_iter()
                .map(|e| e.max(LOG_FLOOR).ln())
                .collect();
            dct2_ortho(&log_mel, n_mfcc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spectra(rows: Vec<Vec<f64>>) -> MagnitudeSpectra {
        MagnitudeSpectra::from_rows(&rows, 2048, 16_000).unwrap()
    }

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 250.0, 999.0, 1000.0, 3000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn silence_gives_dc_only() {
        let c = mfcc(&spectra(vec![vec![0.0; 1025]]), 13, 40);
        let expected = 40f64.sqrt() * LOG_FLOOR.ln();
        assert!((c[0][0] - expected).abs() < 1e-9);
        for v in &c[0][1..] {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn doubling_amplitude_shifts_only_c0() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let row: Vec<f64> = (0..1025).map(|_| rng.random_range(0.1..1.0)).collect();
        let doubled: Vec<f64> = row.iter().map(|v| 2.0 * v).collect();
        let a = mfcc(&spectra(vec![row]), 13, 40);
        let b = mfcc(&spectra(vec![doubled]), 13, 40);
        let shift = 40f64.sqrt() * 4f64.ln();
        assert!((b[0][0] - a[0][0] - shift).abs() < 1e-9);
        for k in 1..13 {
            assert!((b[0][k] - a[0][k]).abs() < 1e-9);
        }
    }

    /// Straight-line reimplementation of the filterbank and DCT.
    fn mfcc_oracle(mag: &[f64]) -> Vec<f64> {
        let freqs: Vec<f64> = (0..1025).map(|k| k as f64 * 16_000.0 / 2048.0).collect();
        let mel_hi = {
            let f = 8000.0f64;
            15.0 + (f / 1000.0).ln() / (6.4f64.ln() / 27.0)
        };
        let mut edges = Vec::new();
        for i in 0..42 {
            let m = mel_hi * i as f64 / 41.0;
            let hz = if m < 15.0 {
                m * 200.0 / 3.0
            } else {
                1000.0 * ((6.4f64.ln() / 27.0) * (m - 15.0)).exp()
            };
            edges.push(hz);
        }
        let mut logs = [0.0; 40];
        for m in 0..40 {
            let mut e = 0.0;
            for k in 0..1025 {
                let f = freqs[k];
                let w = if f <= edges[m] || f >= edges[m + 2] {
                    0.0
                } else if f <= edges[m + 1] {
                    (f - edges[m]) / (edges[m + 1] - edges[m])
                } else {
                    (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1])
                };
                e += w * 2.0 / (edges[m + 2] - edges[m]) * mag[k] * mag[k];
            }
            logs[m] = if e > 1e-10 { e.ln() } else { 1e-10f64.ln() };
        }
        let mut out = vec![0.0; 13];
        for (k, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (i, l) in logs.iter().enumerate() {
                s += l * (std::f64::consts::PI * k as f64 * (2.0 * i as f64 + 1.0) / 80.0).cos();
            }
            *o = s * if k == 0 {
                (1.0f64 / 40.0).sqrt()
            } else {
                (2.0f64 / 40.0).sqrt()
            };
        }
        out
    }

    #[test]
    fn white_noise_matches_oracle_and_decays() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let row: Vec<f64> = (0..1025).map(|_| rng.random_range(0.5..1.5)).collect();
        let got = mfcc(&spectra(vec![row.clone()]), 13, 40);
        let oracle = mfcc_oracle(&row);
        for (a, b) in got[0].iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        let head = got[0][1].abs().max(got[0][2].abs());
        assert!(got[0][0].abs() > head);
        let tail = got[0][8..].iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(tail < got[0][0].abs());
    }
}
