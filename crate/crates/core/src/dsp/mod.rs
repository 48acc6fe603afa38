//! Audio front end: waveforms, framing, tapering and short-time magnitude
//! spectra.
//!
//! The analysis configuration is fixed at 16 kHz, 32 ms windows (512
//! samples), 16 ms hop (256 samples) and a 2048-point FFT. With centered
//! framing a 0.5 s recording yields 32 frames.

mod resample;
mod spectrum;
pub mod wav;

pub use resample::resample;
pub use spectrum::{magnitude_spectrum, MagnitudeSpectra};

use crate::error::{Error, Result};

/// Working sample rate of the feature pipeline.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;
pub const WINDOW_MS: u32 = 32;
pub const HOP_MS: u32 = 16;
pub const N_FFT: usize = 2048;
/// Nominal recording duration; shorter recordings are zero-padded to it.
pub const RECORDING_SECONDS: f64 = 0.5;

/// A mono recording with amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("waveform"));
        }
        if sample_rate_hz == 0 {
            return Err(Error::InvalidArgument(
                "sample rate must be positive".into(),
            ));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("waveform samples"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Zero-pads the tail so the recording lasts at least `seconds`.
    pub fn pad_to_duration(mut self, seconds: f64) -> Self {
        let target = (seconds * self.sample_rate_hz as f64).round() as usize;
        if self.samples.len() < target {
            self.samples.resize(target, 0.0);
        }
        self
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Taper applied to a [`FrameMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// No taper; frames are analysed as-is.
    Rectangular,
    Hamming,
}

/// `L x W` matrix of analysis frames, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    frames: Vec<f64>,
    n_frames: usize,
    win_samples: usize,
    hop_samples: usize,
    sample_rate_hz: u32,
    window: Option<WindowKind>,
}

impl FrameMatrix {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn win_samples(&self) -> usize {
        self.win_samples
    }

    pub fn hop_samples(&self) -> usize {
        self.hop_samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn window(&self) -> Option<WindowKind> {
        self.window
    }

    pub fn is_windowed(&self) -> bool {
        self.window.is_some()
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        &self.frames[n * self.win_samples..(n + 1) * self.win_samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.frames.chunks_exact(self.win_samples)
    }

    /// Declares rectangular (untapered) analysis.
    pub fn with_rectangular(mut self) -> Result<Self> {
        if self.window.is_some() {
            return Err(Error::AlreadyWindowed);
        }
        self.window = Some(WindowKind::Rectangular);
        Ok(self)
    }

    /// Builds a matrix directly from frame rows (all rows must share a length).
    pub fn from_rows(rows: &[Vec<f64>], hop_samples: usize, sample_rate_hz: u32) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput("frame rows"))?;
        let win = first.len();
        if win == 0 {
            return Err(Error::EmptyInput("frame row"));
        }
        let mut frames = Vec::with_capacity(win * rows.len());
        for row in rows {
            if row.len() != win {
                return Err(Error::DimensionMismatch {
                    expected: win,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("frame rows"));
            }
            frames.extend_from_slice(row);
        }
        Ok(Self {
            frames,
            n_frames: rows.len(),
            win_samples: win,
            hop_samples,
            sample_rate_hz,
            window: None,
        })
    }
}

fn ms_to_samples(ms: u32, sample_rate_hz: u32) -> usize {
    ((ms as u64 * sample_rate_hz as u64 + 500) / 1000) as usize
}

/// Number of frames produced by [`frame`] for a signal of `len` samples.
pub fn frame_count(len: usize, win: usize, hop: usize, centered: bool) -> Option<usize> {
    if centered {
        Some(1 + len / hop)
    } else if len >= win {
        Some(1 + (len - win) / hop)
    } else {
        None
    }
}

/// Slices a waveform into overlapping frames.
///
/// Centered framing pads `W/2` zeros on both sides so that frame `n` is
/// centred on sample `n * hop`, giving `1 + floor(len / hop)` frames.
/// Uncentered framing gives `1 + floor((len - W) / hop)` frames.
pub fn frame(w: &Waveform, win_ms: u32, hop_ms: u32, centered: bool) -> Result<FrameMatrix> {
    if hop_ms == 0 || win_ms <= hop_ms {
        return Err(Error::InvalidArgument(format!(
            "window ({win_ms} ms) must exceed hop ({hop_ms} ms) > 0"
        )));
    }
    let sr = w.sample_rate_hz();
    let win = ms_to_samples(win_ms, sr);
    let hop = ms_to_samples(hop_ms, sr).max(1);
    let pad = if centered { win / 2 } else { 0 };
    let len = w.len();
    let n_frames = frame_count(len, win, hop, centered).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "window of {win} samples is longer than the {len}-sample signal"
        ))
    })?;

    let samples = w.samples();
    let mut frames = vec![0.0; n_frames * win];
    for (n, row) in frames.chunks_exact_mut(win).enumerate() {
        let start = (n * hop) as isize - pad as isize;
        for (i, slot) in row.iter_mut().enumerate() {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < len {
                *slot = samples[idx as usize];
            }
        }
    }
    Ok(FrameMatrix {
        frames,
        n_frames,
        win_samples: win,
        hop_samples: hop,
        sample_rate_hz: sr,
        window: None,
    })
}

/// Symmetric `W`-point Hamming taper `0.54 - 0.46 cos(2 pi i / (W - 1))`.
pub fn hamming(width: usize) -> Vec<f64> {
    if width == 1 {
        return vec![1.0];
    }
    let denom = (width - 1) as f64;
    (0..width)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos())
        .collect()
}

pub fn window_hamming(mut fm: FrameMatrix) -> Result<FrameMatrix> {
    if fm.window.is_some() {
        return Err(Error::AlreadyWindowed);
    }
    let taper = hamming(fm.win_samples);
    for row in fm.frames.chunks_exact_mut(fm.win_samples) {
        for (x, t) in row.iter_mut().zip(&taper) {
            *x *= t;
        }
    }
    fm.window = Some(WindowKind::Hamming);
    Ok(fm)
}

/// Full front end for one recording: resample, pad to 0.5 s, centered
/// framing, Hamming taper, 2048-point magnitude spectra.
pub fn analyze(w: &Waveform) -> Result<MagnitudeSpectra> {
    let w = if w.sample_rate_hz() == TARGET_SAMPLE_RATE {
        w.clone()
    } else {
        resample(w, TARGET_SAMPLE_RATE)?
    };
    let w = w.pad_to_duration(RECORDING_SECONDS);
    let frames = frame(&w, WINDOW_MS, HOP_MS, true)?;
    let frames = window_hamming(frames)?;
    magnitude_spectrum(&frames, N_FFT)
}
