//! Manifest CSV: `recording_id, cougher_id, tb_label, wav_path`, then the
//! 16 clinical columns in [`CLINICAL_COLUMNS`] order. `tb_label` and binary
//! clinical columns hold 0 or 1. Relative `wav_path`s resolve against the
//! audio root.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{
    AudioSource, ClinicalRecord, CoughRecording, Cougher, Dataset, CLINICAL_COLUMNS, N_CLINICAL,
};
use crate::dsp::wav;
use crate::error::{Error, Result};

pub const FIXED_COLUMNS: [&str; 4] = ["recording_id", "cougher_id", "tb_label", "wav_path"];

pub fn manifest_header() -> Vec<&'static str> {
    FIXED_COLUMNS
        .iter()
        .chain(CLINICAL_COLUMNS.iter())
        .copied()
        .collect()
}

#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub dataset: Dataset,
    /// Out-of-range clinical values, one message per offending field.
    pub warnings: Vec<String>,
}

struct Row {
    line: usize,
    recording_id: String,
    cougher_id: String,
    label: bool,
    path: PathBuf,
    clinical: ClinicalRecord,
}

fn parse_row(line: usize, rec: &csv::StringRecord, audio_root: &Path) -> Result<Row> {
    let malformed = |reason: String| Error::MalformedRow { row: line, reason };
    if rec.len() != FIXED_COLUMNS.len() + N_CLINICAL {
        return Err(malformed(format!(
            "expected {} fields, found {}",
            FIXED_COLUMNS.len() + N_CLINICAL,
            rec.len()
        )));
    }
    let field = |j: usize| rec.get(j).unwrap_or("").trim();
    for j in 0..rec.len() {
        if field(j).is_empty() {
            let name = manifest_header()[j];
            return Err(malformed(format!("missing value for {name}")));
        }
    }
    let label = match field(2) {
        "0" => false,
        "1" => true,
        other => return Err(malformed(format!("tb_label must be 0 or 1, got {other:?}"))),
    };
    let mut values = [0.0; N_CLINICAL];
    for (k, v) in values.iter_mut().enumerate() {
        let raw = field(FIXED_COLUMNS.len() + k);
        *v = raw
            .parse::<f64>()
            .map_err(|_| malformed(format!("{} is not a number: {raw:?}", CLINICAL_COLUMNS[k])))?;
    }
    let clinical = ClinicalRecord::decode(&values).map_err(|e| malformed(e.to_string()))?;
    let p = PathBuf::from(field(3));
    Ok(Row {
        line,
        recording_id: field(0).to_string(),
        cougher_id: field(1).to_string(),
        label,
        path: if p.is_absolute() {
            p
        } else {
            audio_root.join(p)
        },
        clinical,
    })
}

/// Reads a manifest, checks every referenced WAV and groups rows by cougher.
pub fn load_manifest(manifest_path: &Path, audio_root: &Path) -> Result<LoadedManifest> {
    if !manifest_path.exists() {
        return Err(Error::MissingFile(manifest_path.to_path_buf()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(manifest_path)?;
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != manifest_header() {
        return Err(Error::MalformedRow {
            row: 1,
            reason: format!("header must be {}", manifest_header().join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        rows.push(parse_row(i + 2, &rec?, audio_root)?);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("manifest"));
    }

    rows.par_iter().try_for_each(|r| {
        if !r.path.exists() {
            return Err(Error::MissingFile(r.path.clone()));
        }
        wav::probe(&r.path).map(|_| ())
    })?;

    let mut grouped: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for r in rows {
        grouped.entry(r.cougher_id.clone()).or_default().push(r);
    }
    let mut coughers = Vec::with_capacity(grouped.len());
    let mut warnings = Vec::new();
    for (id, rows) in grouped {
        let first = &rows[0];
        for r in &rows[1..] {
            if r.label != first.label {
                return Err(Error::CougherConflict {
                    cougher: id,
                    field: "tb_label",
                });
            }
            if r.clinical != first.clinical {
                return Err(Error::CougherConflict {
                    cougher: id,
                    field: "clinical record",
                });
            }
        }
        warnings.extend(
            first
                .clinical
                .range_warnings()
                .into_iter()
                .map(|w| format!("cougher {id} (row {}): {w}", first.line)),
        );
        coughers.push(Cougher {
            tb_label: first.label,
            clinical: first.clinical.clone(),
            recordings: rows
                .iter()
                .map(|r| CoughRecording {
                    id: r.recording_id.clone(),
                    cougher_id: id.clone(),
                    audio: AudioSource::File(r.path.clone()),
                })
                .collect(),
            id,
        });
    }
    Ok(LoadedManifest {
        dataset: Dataset::new(coughers)?,
        warnings,
    })
}

/// Writes every recording as 16-bit WAV under `dir/audio/` plus
/// `dir/manifest.csv` with relative paths. Returns the manifest path.
pub fn export_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf> {
    let audio_dir = dir.join("audio");
    std::fs::create_dir_all(&audio_dir)?;
    let jobs: Vec<&CoughRecording> = ds.recordings().collect();
    jobs.par_iter().try_for_each(|r| {
        wav::write_wav(&audio_dir.join(format!("{}.wav", r.id)), &r.waveform()?)
    })?;
    let manifest = dir.join("manifest.csv");
    let mut wr = csv::Writer::from_path(&manifest)?;
    wr.write_record(manifest_header())?;
    for c in ds.coughers() {
        let clinical: Vec<String> = c
            .clinical
            .encode()
            .iter()
            .map(|v| format!("{v:?}"))
            .collect();
        for r in &c.recordings {
            let mut rec = vec![
                r.id.clone(),
                c.id.clone(),
                if c.tb_label { "1" } else { "0" }.to_string(),
                format!("audio/{}.wav", r.id),
            ];
            rec.extend(clinical.iter().cloned());
            wr.write_record(&rec)?;
        }
    }
    wr.flush()?;
    Ok(manifest)
}
