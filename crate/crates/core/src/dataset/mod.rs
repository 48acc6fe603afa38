//! Participants, recordings and clinical variables; manifest ingestion,
//! feature assembly, standardisation and synthetic data generation.

pub mod clinical;
pub mod manifest;
pub mod scaler;
pub mod synthetic;

use std::collections::BTreeSet;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use clinical::{ClinicalRecord, CLINICAL_COLUMNS, N_CLINICAL};
pub use scaler::StandardScaler;
pub use synthetic::{generate_synthetic, SyntheticConfig};

use crate::dsp::{wav, Waveform};
use crate::error::{Error, Result};
use crate::features::{self, N_AUDIO_FEATURES};
use crate::matrix::Matrix;

pub const N_FUSED_FEATURES: usize = N_AUDIO_FEATURES + N_CLINICAL;

/// Which feature blocks feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// 261 acoustic features.
    Audio,
    /// Acoustic features followed by the 16 clinical variables.
    Fused,
}

impl FeatureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Audio => "audio",
            FeatureMode::Fused => "fused",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            FeatureMode::Audio => N_AUDIO_FEATURES,
            FeatureMode::Fused => N_FUSED_FEATURES,
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" => Ok(FeatureMode::Audio),
            "fused" => Ok(FeatureMode::Fused),
            other => Err(Error::Config(format!("unknown feature mode {other:?}"))),
        }
    }
}

/// Where a recording's samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum AudioSource {
    Samples(Waveform),
    File(PathBuf),
    /// Rendered on demand by the synthetic generator.
    Synthetic(synthetic::CoughRecipe),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoughRecording {
    pub id: String,
    pub cougher_id: String,
    pub audio: AudioSource,
}

impl CoughRecording {
    pub fn waveform(&self) -> Result<Waveform> {
        match &self.audio {
            AudioSource::Samples(w) => Ok(w.clone()),
            AudioSource::File(path) => wav::read_wav(path),
            AudioSource::Synthetic(recipe) => Ok(recipe.render()),
        }
    }
}

/// A participant: the grouping unit for every split.
#[derive(Debug, Clone, PartialEq)]
pub struct Cougher {
    pub id: String,
    pub tb_label: bool,
    pub clinical: ClinicalRecord,
    pub recordings: Vec<CoughRecording>,
}

/// Immutable collection of coughers, sorted by id with recordings sorted
/// by id, so downstream results do not depend on input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    coughers: Vec<Cougher>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub coughers: usize,
    pub recordings: usize,
    pub positive_coughers: usize,
    pub negative_coughers: usize,
    pub min_recordings: usize,
    pub max_recordings: usize,
    pub mean_recordings: f64,
    pub std_recordings: f64,
}

impl Dataset {
    pub fn new(mut coughers: Vec<Cougher>) -> Result<Self> {
        if coughers.is_empty() {
            return Err(Error::EmptyInput("dataset"));
        }
        coughers.sort_by(|a, b| a.id.cmp(&b.id));
        let mut seen_recordings = BTreeSet::new();
        for c in coughers.iter_mut() {
            if c.recordings.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "cougher {} has no recordings",
                    c.id
                )));
            }
            for r in &c.recordings {
                if r.cougher_id != c.id {
                    return Err(Error::InvalidArgument(format!(
                        "recording {} references cougher {} but is filed under {}",
                        r.id, r.cougher_id, c.id
                    )));
                }
                if !seen_recordings.insert(r.id.clone()) {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate recording id {}",
                        r.id
                    )));
                }
            }
            c.recordings.sort_by(|a, b| a.id.cmp(&b.id));
        }
        for pair in coughers.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::InvalidArgument(format!(
                    "duplicate cougher id {}",
                    pair[0].id
                )));
            }
        }
        Ok(Self { coughers })
    }

    pub fn coughers(&self) -> &[Cougher] {
        &self.coughers
    }

    pub fn n_coughers(&self) -> usize {
        self.coughers.len()
    }

    pub fn n_recordings(&self) -> usize {
        self.coughers.iter().map(|c| c.recordings.len()).sum()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.coughers.iter().map(|c| c.tb_label).collect()
    }

    pub fn recordings(&self) -> impl Iterator<Item = &CoughRecording> {
        self.coughers.iter().flat_map(|c| c.recordings.iter())
    }

    pub fn summary(&self) -> DatasetSummary {
        let counts: Vec<f64> = self
            .coughers
            .iter()
            .map(|c| c.recordings.len() as f64)
            .collect();
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = if counts.len() > 1 {
            counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let positive = self.coughers.iter().filter(|c| c.tb_label).count();
        DatasetSummary {
            coughers: self.coughers.len(),
            recordings: self.n_recordings(),
            positive_coughers: positive,
            negative_coughers: self.coughers.len() - positive,
            min_recordings: counts.iter().cloned().fold(f64::INFINITY, f64::min) as usize,
            max_recordings: counts.iter().cloned().fold(0.0, f64::max) as usize,
            mean_recordings: mean,
            std_recordings: var.sqrt(),
        }
    }

    /// Copy without the listed coughers.
    pub fn without(&self, ids: &BTreeSet<String>) -> Result<Self> {
        Self::new(
            self.coughers
                .iter()
                .filter(|c| !ids.contains(&c.id))
                .cloned()
                .collect(),
        )
    }
}

/// Concatenates acoustic and clinical blocks, acoustic first.
pub fn fuse(audio: &[f64], clinical: &[f64]) -> Result<Vec<f64>> {
    if audio.len() != N_AUDIO_FEATURES {
        return Err(Error::DimensionMismatch {
            expected: N_AUDIO_FEATURES,
            actual: audio.len(),
        });
    }
    if clinical.len() != N_CLINICAL {
        return Err(Error::DimensionMismatch {
            expected: N_CLINICAL,
            actual: clinical.len(),
        });
    }
    let mut v = Vec::with_capacity(N_FUSED_FEATURES);
    v.extend_from_slice(audio);
    v.extend_from_slice(clinical);
    Ok(v)
}

/// Column names of the fused layout.
pub fn fused_feature_names() -> Vec<String> {
    let mut names = features::audio_feature_names();
    names.extend(CLINICAL_COLUMNS.iter().map(|s| s.to_string()));
    names
}

/// Unscaled fused features for every recording, in dataset order.
///
/// Extraction is label-free and per recording, so computing it once for the
/// whole dataset leaks nothing; standardisation happens later per split.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub features: Matrix,
    pub recording_ids: Vec<String>,
    /// Index into [`Dataset::coughers`] for each row.
    pub cougher_index: Vec<usize>,
    pub labels: Vec<bool>,
}

impl FeatureTable {
    pub fn build(ds: &Dataset) -> Result<Self> {
        let jobs: Vec<(usize, &CoughRecording)> = ds
            .coughers()
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.recordings.iter().map(move |r| (i, r)))
            .collect();
        let rows: Vec<Vec<f64>> = jobs
            .par_iter()
            .map(|(i, r)| {
                let audio = features::extract(&r.waveform()?)?;
                fuse(audio.as_slice(), &ds.coughers()[*i].clinical.encode())
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            features: Matrix::from_rows(&rows)?,
            recording_ids: jobs.iter().map(|(_, r)| r.id.clone()).collect(),
            cougher_index: jobs.iter().map(|(i, _)| *i).collect(),
            labels: jobs
                .iter()
                .map(|(i, _)| ds.coughers()[*i].tb_label)
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Columns used by a feature mode.
    pub fn columns(mode: FeatureMode) -> Vec<usize> {
        (0..mode.dim()).collect()
    }

    /// One row per recording: ids, label, then the columns of `mode`.
    pub fn write_csv<W: std::io::Write>(
        &self,
        out: W,
        ds: &Dataset,
        mode: FeatureMode,
    ) -> Result<()> {
        let dim = mode.dim();
        let mut wr = csv::Writer::from_writer(out);
        let mut header = vec![
            "recording_id".to_string(),
            "cougher_id".into(),
            "tb_label".into(),
        ];
        header.extend(fused_feature_names().into_iter().take(dim));
        wr.write_record(&header)?;
        for r in 0..self.len() {
            let mut rec = vec![
                self.recording_ids[r].clone(),
                ds.coughers()[self.cougher_index[r]].id.clone(),
                if self.labels[r] { "1" } else { "0" }.to_string(),
            ];
            rec.extend(self.features.row(r)[..dim].iter().map(|v| v.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Row indices whose cougher index is in `coughers` (sorted).
    pub fn rows_for(&self, coughers: &[usize]) -> Vec<usize> {
        let set: BTreeSet<usize> = coughers.iter().copied().collect();
        (0..self.len())
            .filter(|&r| set.contains(&self.cougher_index[r]))
            .collect()
    }
}
