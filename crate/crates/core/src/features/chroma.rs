use crate::dsp::MagnitudeSpectra;

pub const N_CHROMA: usize = 12;
/// Bins at or below A0 carry no pitch class.
pub const MIN_PITCH_HZ: f64 = 27.5;
pub const REFERENCE_A_HZ: f64 = 440.0;
/// Index of pitch class A when C is 0.
const A_CLASS: i64 = 9;

/// Pitch class (C = 0, ..., B = 11) of a frequency under A440 tuning.
pub fn pitch_class(freq_hz: f64) -> Option<usize> {
    if freq_hz <= MIN_PITCH_HZ {
        return None;
    }
    let semitones = (12.0 * (freq_hz / REFERENCE_A_HZ).log2()).round() as i64;
    Some((semitones + A_CLASS).rem_euclid(N_CHROMA as i64) as usize)
}

/// Folds squared magnitudes into 12 pitch classes, max-normalised per frame.
pub fn chroma(spectra: &MagnitudeSpectra, n_bins: usize) -> Vec<Vec<f64>> {
    assert_eq!(n_bins, N_CHROMA, "only 12-class chroma is supported");
    let classes: Vec<Option<usize>> = spectra
        .bin_freqs()
        .iter()
        .map(|&f| pitch_class(f))
        .collect();
    spectra
        .rows()
        .map(|row| {
            let mut energy = vec![0.0; n_bins];
            for (x, class) in row.iter().zip(&classes) {
                if let Some(c) = class {
                    energy[*c] += x * x;
                }
            }
            let peak = energy.iter().cloned().fold(0.0, f64::max);
            if peak > 0.0 {
                energy.iter_mut().for_each(|e| *e /= peak);
            }
            energy
        })
        .collect()
}
