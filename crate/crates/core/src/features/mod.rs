//! Acoustic feature extraction.
//!
//! Each frame is described by 29 values (centroid, bandwidth, 85% roll-off,
//! flatness, 13 MFCCs, 12 chroma bins). Every per-frame trajectory is then
//! reduced to 9 functionals, giving a fixed 261-value vector per recording,
//! laid out feature-major: all 9 functionals of the centroid first, then
//! those of the bandwidth, and so on.

pub mod chroma;
pub mod functionals;
pub mod mfcc;
pub mod spectral;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use functionals::{summarize, SummaryFunctionals, FUNCTIONAL_NAMES, N_FUNCTIONALS};

use crate::dsp::{self, MagnitudeSpectra, Waveform};
use crate::error::{Error, Result};

pub const N_FRAME_FEATURES: usize = 29;
pub const N_AUDIO_FEATURES: usize = N_FRAME_FEATURES * N_FUNCTIONALS;

/// Column names of the per-frame descriptor matrix, in order.
pub fn frame_feature_names() -> Vec<String> {
    let mut names: Vec<String> = ["centroid", "bandwidth", "rolloff", "flatness"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..mfcc::N_MFCC).map(|i| format!("mfcc{i}")));
    names.extend((0..chroma::N_CHROMA).map(|i| format!("chroma{i}")));
    names
}

/// `<feature>_<functional>` names of the 261-value vector.
pub fn audio_feature_names() -> Vec<String> {
    frame_feature_names()
        .iter()
        .flat_map(|f| FUNCTIONAL_NAMES.iter().map(move |g| format!("{f}_{g}")))
        .collect()
}

/// `L x 29` descriptor matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    values: Vec<f64>,
    n_frames: usize,
}

impl FrameFeatures {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * N_FRAME_FEATURES..(n + 1) * N_FRAME_FEATURES]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_frames)
            .map(|n| self.values[n * N_FRAME_FEATURES + j])
            .collect()
    }

    /// Rebuilds the matrix with frames in the given order.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for &n in order {
            values.extend_from_slice(self.row(n));
        }
        Self {
            values,
            n_frames: self.n_frames,
        }
    }
}

/// Computes all 29 descriptors for every frame.
pub fn frame_features(spectra: &MagnitudeSpectra) -> FrameFeatures {
    let centroid = spectral::spectral_centroid(spectra);
    let bandwidth = spectral::spectral_bandwidth(spectra, spectral::BANDWIDTH_ORDER);
    let rolloff = spectral::spectral_rolloff(spectra, spectral::ROLLOFF_FRACTION);
    let flatness = spectral::spectral_flatness(spectra);
    let mfccs = mfcc::mfcc(spectra, mfcc::N_MFCC, mfcc::DEFAULT_N_MELS);
    let chromas = chroma::chroma(spectra, chroma::N_CHROMA);

    let n_frames = spectra.n_frames();
    let mut values = Vec::with_capacity(n_frames * N_FRAME_FEATURES);
    for n in 0..n_frames {
        values.extend([centroid[n], bandwidth[n], rolloff[n], flatness[n]]);
        values.extend_from_slice(&mfccs[n]);
        values.extend_from_slice(&chromas[n]);
    }
    FrameFeatures { values, n_frames }
}

/// The 261-value acoustic summary of one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingFeatureVector(Vec<f64>);

impl RecordingFeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != N_AUDIO_FEATURES {
            return Err(Error::DimensionMismatch {
                expected: N_AUDIO_FEATURES,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature vector"));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Applies the functionals to each descriptor trajectory.
pub fn summarize_frames(ff: &FrameFeatures) -> Result<RecordingFeatureVector> {
    let mut values = Vec::with_capacity(N_AUDIO_FEATURES);
    for j in 0..N_FRAME_FEATURES {
        values.extend(summarize(&ff.column(j))?.to_array());
    }
    RecordingFeatureVector::new(values)
}

/// Waveform to 261-value vector.
pub fn extract(w: &Waveform) -> Result<RecordingFeatureVector> {
    let spectra = dsp::analyze(w)?;
    summarize_frames(&frame_features(&spectra))
}

/// One row of a feature dump.
pub struct FeatureRow<'a> {
    pub recording_id: &'a str,
    pub cougher_id: &'a str,
    pub values: &'a [f64],
}

/// Writes `recording_id,cougher_id,<feature>_<functional>...` CSV.
pub fn write_feature_csv<'a, W: Write>(
    out: W,
    rows: impl IntoIterator<Item = FeatureRow<'a>>,
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    let mut header = vec!["recording_id".to_string(), "cougher_id".to_string()];
    header.extend(audio_feature_names());
    wr.write_record(&header)?;
    for row in rows {
        let mut record = vec![row.recording_id.to_string(), row.cougher_id.to_string()];
        record.extend(row.values.iter().map(|v| format!("{v:?}")));
        wr.write_record(&record)?;
    }
    wr.flush()?;
    Ok(())
}
