//! Statistics-matched synthetic cohorts.
//!
//! Each cough is a noise burst passed through a one-pole spectral tilt and a
//! two-pole resonance, shaped by an attack/decay envelope. Positive coughers
//! get a darker tilt, a lower and wider resonance, with shifts proportional
//! to `signal_strength_audio`. Clinical fields shift with the label in
//! proportion to `signal_strength_clinical`. Both strengths at 0 give label-
//! independent data.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};

use super::{AudioSource, ClinicalRecord, CoughRecording, Cougher, Dataset};
use crate::dsp::{Waveform, TARGET_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_coughers: usize,
    pub prevalence: f64,
    pub coughs_mean: f64,
    pub coughs_std: f64,
    pub coughs_min: usize,
    pub coughs_max: usize,
    pub signal_strength_audio: f64,
    pub signal_strength_clinical: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_coughers: 1105,
            prevalence: 295.0 / 1105.0,
            coughs_mean: 9.03,
            coughs_std: 5.7,
            coughs_min: 3,
            coughs_max: 50,
            signal_strength_audio: 0.5,
            signal_strength_clinical: 1.0,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic config: {m}")));
        if self.n_coughers < 2 {
            return bad("n_coughers must be at least 2");
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return bad("prevalence must lie in (0, 1)");
        }
        if self.coughs_min < 1 {
            return bad("coughs_min must be at least 1");
        }
        if self.coughs_min > self.coughs_max {
            return bad("coughs_min exceeds coughs_max");
        }
        if !(self.coughs_std >= 0.0 && self.coughs_mean.is_finite()) {
            return bad("coughs_std must be non-negative and coughs_mean finite");
        }
        if !(self.signal_strength_audio >= 0.0 && self.signal_strength_clinical >= 0.0) {
            return bad("signal strengths must be non-negative");
        }
        if self.signal_strength_audio > 1.5 {
            return bad("signal_strength_audio above 1.5 pushes filter parameters out of range");
        }
        let positives = self.n_positive();
        if positives == 0 || positives == self.n_coughers {
            return bad("prevalence leaves one class empty");
        }
        Ok(())
    }

    pub fn n_positive(&self) -> usize {
        (self.n_coughers as f64 * self.prevalence).round() as usize
    }
}

/// Everything needed to render one synthetic cough.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoughRecipe {
    pub seed: u64,
    pub n_samples: usize,
    /// One-pole coefficient; larger is darker.
    pub tilt: f64,
    pub centre_hz: f64,
    pub bandwidth_hz: f64,
    /// Share of resonant versus broadband energy.
    pub resonance_mix: f64,
    pub attack_s: f64,
    pub decay_s: f64,
    pub peak: f64,
}

impl CoughRecipe {
    pub fn render(&self) -> Waveform {
        let fs = TARGET_SAMPLE_RATE as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let r = (-PI * self.bandwidth_hz / fs).exp();
        let c = 2.0 * r * (2.0 * PI * self.centre_hz / fs).cos();
        let (mut tilt_prev, mut y1, mut y2) = (0.0, 0.0, 0.0);
        let mut out = Vec::with_capacity(self.n_samples);
        for n in 0..self.n_samples {
            let x: f64 = StandardNormal.sample(&mut rng);
            let tilted = x + self.tilt * tilt_prev;
            tilt_prev = tilted;
            let res = (1.0 - r) * tilted + c * y1 - r * r * y2;
            y2 = y1;
            y1 = res;
            let t = n as f64 / fs;
            let env = if t < self.attack_s {
                t / self.attack_s
            } else {
                (-(t - self.attack_s) / self.decay_s).exp()
            };
            let broadband = tilted * (1.0 - self.tilt);
            out.push(
                env * ((1.0 - self.resonance_mix) * broadband + self.resonance_mix * res * 4.0),
            );
        }
        let max = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max > 0.0 {
            out.iter_mut().for_each(|v| *v *= self.peak / max);
        }
        Waveform::new(out, TARGET_SAMPLE_RATE).expect("rendered samples are finite")
    }
}

/// Latent normal (mean, std) whose rounded, clipped draws have the target
/// mean and standard deviation.
pub fn latent_count_params(cfg: &SyntheticConfig) -> (f64, f64) {
    let (lo, hi) = (cfg.coughs_min as f64, cfg.coughs_max as f64);
    if cfg.coughs_std == 0.0 || lo == hi {
        return (cfg.coughs_mean, 0.0);
    }
    let (mut mu, mut sigma) = (cfg.coughs_mean, cfg.coughs_std);
    for _ in 0..500 {
        let (m, s) = count_moments(mu, sigma, lo, hi);
        let (dm, ds) = (cfg.coughs_mean - m, cfg.coughs_std / s.max(1e-9));
        mu += dm;
        sigma = (sigma * ds).clamp(1e-3, 1e3);
        if dm.abs() < 1e-10 && (ds - 1.0).abs() < 1e-10 {
            break;
        }
    }
    (mu, sigma)
}

/// Mean and std of `clamp(round(N(mu, sigma)), lo, hi)`.
pub fn count_moments(mu: f64, sigma: f64, lo: f64, hi: f64) -> (f64, f64) {
    let n = NormalCdf::new(mu, sigma).expect("positive sigma");
    let mut k = lo;
    let (mut m1, mut m2) = (0.0, 0.0);
    while k <= hi {
        let upper = if k == hi { 1.0 } else { n.cdf(k + 0.5) };
        let lower = if k == lo { 0.0 } else { n.cdf(k - 0.5) };
        let p = upper - lower;
        m1 += p * k;
        m2 += p * k * k;
        k += 1.0;
    }
    (m1, (m2 - m1 * m1).max(0.0).sqrt())
}

fn bern(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p.clamp(0.0, 1.0)
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, std: f64) -> f64 {
    Normal::new(mean, std).expect("valid normal").sample(rng)
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

fn clinical_record(rng: &mut ChaCha8Rng, y: f64, s: f64) -> ClinicalRecord {
    let sy = s * y;
    let sex_male = bern(rng, 0.5 + 0.1 * sy);
    let male = if sex_male { 1.0 } else { 0.0 };
    let prior_tb = bern(rng, 0.12 + 0.12 * sy);
    let subtype = rng.random::<f64>();
    ClinicalRecord {
        age: round_to(normal(rng, 38.0 + 3.0 * sy, 12.0).clamp(18.0, 85.0), 1.0),
        sex_male,
        height: round_to(
            normal(rng, 160.0 + 9.0 * male, 8.0).clamp(130.0, 200.0),
            0.5,
        ),
        weight: round_to(
            normal(rng, 62.0 + 8.0 * male - 6.0 * sy, 10.0).clamp(32.0, 150.0),
            0.1,
        ),
        cough_duration: normal(rng, 14f64.ln() + 0.5 * sy, 0.7)
            .exp()
            .clamp(14.0, 365.0)
            .round(),
        prior_tb,
        prior_tb_pulmonary: prior_tb && subtype < 0.7,
        prior_tb_extrapulmonary: prior_tb && (0.7..0.8).contains(&subtype),
        prior_tb_unknown: prior_tb && subtype >= 0.8,
        hemoptysis: bern(rng, 0.08 + 0.1 * sy),
        heart_rate: normal(rng, 85.0 + 7.0 * sy, 12.0)
            .clamp(45.0, 160.0)
            .round(),
        temperature: round_to(normal(rng, 36.8 + 0.35 * sy, 0.4).clamp(35.0, 41.0), 0.1),
        smoked_last_week: bern(rng, 0.2 + 0.05 * sy),
        fever: bern(rng, 0.3 + 0.25 * sy),
        night_sweats: bern(rng, 0.35 + 0.25 * sy),
        weight_loss: bern(rng, 0.35 + 0.3 * sy),
    }
}

fn recipes(rng: &mut ChaCha8Rng, n: usize, y: f64, s: f64) -> Vec<CoughRecipe> {
    let sy = s * y;
    let tilt = rng.random_range(0.35..0.75) + 0.12 * sy;
    let centre = rng.random_range(500.0..1600.0) * (1.0 - 0.25 * sy);
    let bandwidth = rng.random_range(150.0..450.0) * (1.0 + 0.6 * sy);
    let mix = rng.random_range(0.3..0.7);
    (0..n)
        .map(|_| CoughRecipe {
            seed: rng.random(),
            n_samples: rng.random_range(6400..=8000),
            tilt: (tilt + normal(rng, 0.0, 0.04)).clamp(0.05, 0.95),
            centre_hz: (centre * normal(rng, 1.0, 0.08)).clamp(150.0, 4000.0),
            bandwidth_hz: (bandwidth * normal(rng, 1.0, 0.1)).clamp(50.0, 1500.0),
            resonance_mix: mix,
            attack_s: rng.random_range(0.01..0.04),
            decay_s: rng.random_range(0.06..0.18),
            peak: rng.random_range(0.3..0.9),
        })
        .collect()
}

/// Pure function of `cfg`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut labels = vec![false; cfg.n_coughers];
    labels[..cfg.n_positive()]
        .iter_mut()
        .for_each(|l| *l = true);
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        cfg.seed,
        u64::MAX,
    )));
    let (mu, sigma) = latent_count_params(cfg);
    let width = cfg.n_coughers.to_string().len().max(4);

    let coughers = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, i as u64));
            let draw = if sigma > 0.0 {
                normal(&mut rng, mu, sigma)
            } else {
                mu
            };
            let count = (draw.round().max(0.0) as usize).clamp(cfg.coughs_min, cfg.coughs_max);
            let y = if label { 1.0 } else { 0.0 };
            let clinical = clinical_record(&mut rng, y, cfg.signal_strength_clinical);
            let id = format!("S{i:0width$}");
            let recordings = recipes(&mut rng, count, y, cfg.signal_strength_audio)
                .into_iter()
                .enumerate()
                .map(|(k, recipe)| CoughRecording {
                    id: format!("{id}_{k:02}"),
                    cougher_id: id.clone(),
                    audio: AudioSource::Synthetic(recipe),
                })
                .collect();
            Cougher {
                id,
                tb_label: label,
                clinical,
                recordings,
            }
        })
        .collect();
    Dataset::new(coughers)
}
