use rustfft::{num_complex::Complex, FftPlanner};

use super::FrameMatrix;
use crate::error::{Error, Result};

/// One-sided magnitude spectra, `L x (n_fft/2 + 1)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectra {
    values: Vec<f64>,
    n_frames: usize,
    bin_freqs: Vec<f64>,
    n_fft: usize,
    sample_rate_hz: u32,
}

impl MagnitudeSpectra {
    /// Wraps precomputed magnitudes. `bin_freqs[k] = k * sample_rate / n_fft`.
    pub fn from_rows(rows: &[Vec<f64>], n_fft: usize, sample_rate_hz: u32) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("spectrum rows"));
        }
        let n_bins = n_fft / 2 + 1;
        let mut values = Vec::with_capacity(rows.len() * n_bins);
        for row in rows {
            if row.len() != n_bins {
                return Err(Error::DimensionMismatch {
                    expected: n_bins,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidArgument(
                    "magnitudes must be finite and nonnegative".into(),
                ));
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            values,
            n_frames: rows.len(),
            bin_freqs: bin_frequencies(n_fft, sample_rate_hz),
            n_fft,
            sample_rate_hz,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.bin_freqs.len()
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn bin_freqs(&self) -> &[f64] {
        &self.bin_freqs
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let b = self.n_bins();
        &self.values[n * b..(n + 1) * b]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_bins())
    }
}

pub fn bin_frequencies(n_fft: usize, sample_rate_hz: u32) -> Vec<f64> {
    (0..=n_fft / 2)
        .map(|k| k as f64 * sample_rate_hz as f64 / n_fft as f64)
        .collect()
}

/// `|DFT|` of each frame, zero-padded to `n_fft`, bins `0..=n_fft/2`.
pub fn magnitude_spectrum(fm: &FrameMatrix, n_fft: usize) -> Result<MagnitudeSpectra> {
    if !fm.is_windowed() {
        return Err(Error::NotWindowed);
    }
    if fm.win_samples() > n_fft {
        return Err(Error::InvalidArgument(format!(
            "frame length {} exceeds FFT size {n_fft}",
            fm.win_samples()
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let n_bins = n_fft / 2 + 1;
    let mut values = Vec::with_capacity(fm.n_frames() * n_bins);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for row in fm.rows() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (c, &x) in buf.iter_mut().zip(row) {
            c.re = x;
        }
        fft.process(&mut buf);
        values.extend(buf[..n_bins].iter().map(|c| c.norm()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("magnitude spectrum"));
    }
    Ok(MagnitudeSpectra {
        values,
        n_frames: fm.n_frames(),
        bin_freqs: bin_frequencies(n_fft, fm.sample_rate_hz()),
        n_fft,
        sample_rate_hz: fm.sample_rate_hz(),
    })
}
