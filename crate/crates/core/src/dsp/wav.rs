//! RIFF WAV input/output: 16-bit signed PCM, mono.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};

const PCM_SCALE: f64 = 32768.0;

fn check_spec(path: &Path, spec: &WavSpec) -> Result<()> {
    let reject = |reason: String| {
        Err(Error::UnsupportedAudio {
            path: path.to_path_buf(),
            reason,
        })
    };
    if spec.channels != 1 {
        return reject(format!("{} channels; only mono is accepted", spec.channels));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return reject(format!(
            "{:?} {}-bit samples; only 16-bit PCM is accepted",
            spec.sample_format, spec.bits_per_sample
        ));
    }
    Ok(())
}

/// Checks that `path` is a readable mono 16-bit PCM WAV without decoding it.
pub fn probe(path: &Path) -> Result<WavSpec> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(|e| Error::UnsupportedAudio {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let spec = reader.spec();
    check_spec(path, &spec)?;
    Ok(spec)
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = WavReader::open(path).map_err(|e| Error::UnsupportedAudio {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let spec = reader.spec();
    check_spec(path, &spec)?;
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / PCM_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if samples.is_empty() {
        return Err(Error::UnsupportedAudio {
            path: path.to_path_buf(),
            reason: "no samples".into(),
        });
    }
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a waveform as 16-bit PCM, clipping to the representable range.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &s in w.samples() {
        let q = (s * PCM_SCALE)
            .round()
            .clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(q)?;
    }
    writer.finalize()?;
    Ok(())
}
