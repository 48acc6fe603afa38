use super::Waveform;
use crate::error::{Error, Result};

/// Zero crossings of the low-pass kernel on each side of the centre tap.
const KERNEL_ZEROS: f64 = 16.0;
/// Passband edge as a fraction of the output Nyquist frequency.
const ROLLOFF: f64 = 0.94;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Blackman taper evaluated at `u` in `[-1, 1]`.
fn blackman(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let a = std::f64::consts::PI * (u + 1.0);
    0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos()
}

/// Rational-ratio polyphase resampler with a Blackman-windowed sinc
/// anti-aliasing kernel.
///
/// Output sample `n` sits at input position `n * down / up`; each of the
/// `up` fractional phases has its own kernel, normalised to unit DC gain.
/// Samples outside the signal are treated as zeros.
pub fn resample(w: &Waveform, target_hz: u32) -> Result<Waveform> {
    let src = w.sample_rate_hz();
    if target_hz == 0 {
        return Err(Error::InvalidArgument(
            "target rate must be positive".into(),
        ));
    }
    if target_hz > src {
        return Err(Error::InvalidArgument(format!(
            "upsampling from {src} Hz to {target_hz} Hz is not supported"
        )));
    }
    if target_hz == src {
        return Ok(w.clone());
    }

    let g = gcd(src as u64, target_hz as u64);
    let up = (target_hz as u64 / g) as usize;
    let down = (src as u64 / g) as usize;

    // cutoff in cycles per input sample
    let cutoff = 0.5 * (up as f64 / down as f64) * ROLLOFF;
    let half_width = KERNEL_ZEROS / (2.0 * cutoff);
    let reach = half_width.ceil() as isize;
    let taps = 2 * reach as usize + 1;

    let mut bank = vec![0.0; up * taps];
    for (phase, kernel) in bank.chunks_exact_mut(taps).enumerate() {
        let frac = phase as f64 / up as f64;
        for (t, h) in kernel.iter_mut().enumerate() {
            let j = t as isize - reach;
            let u = frac - j as f64;
            *h = 2.0 * cutoff * sinc(2.0 * cutoff * u) * blackman(u / half_width);
        }
        let gain: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|h| *h /= gain);
    }

    let x = w.samples();
    let len = x.len();
    let out_len = (len as u64 * up as u64).div_ceil(down as u64) as usize;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let pos = n as u64 * down as u64;
        let base = (pos / up as u64) as isize;
        let phase = (pos % up as u64) as usize;
        let kernel = &bank[phase * taps..(phase + 1) * taps];
        let mut acc = 0.0;
        for (t, h) in kernel.iter().enumerate() {
            let idx = base + t as isize - reach;
            if idx >= 0 && (idx as usize) < len {
                acc += h * x[idx as usize];
            }
        }
        out.push(acc);
    }
    Waveform::new(out, target_hz)
}
