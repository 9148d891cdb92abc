//! Post-vectorization filters: zero-phase Butterworth lowpass and Hann
//! smoothing.
//!
//! The Butterworth filter is designed in the analog domain (poles on the
//! unit Butterworth circle, prewarped cutoff) and mapped through the
//! bilinear transform into second-order sections, each normalized to unity
//! DC gain. Zero phase comes from a forward-backward pass; section states
//! initialize at the DC steady state, so constants pass through unchanged.

use crate::audio::AudioSignal;
use crate::error::{Error, Result};

/// One direct-form-II-transposed section.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn filter(&self, x: &[f64], y: &mut Vec<f64>) {
        y.clear();
        // DC steady-state initial conditions for the first input value.
        let x0 = x.first().copied().unwrap_or(0.0);
        let mut z1 = x0 * (1.0 - self.b0);
        let mut z2 = x0 * (self.b2 - self.a2);
        for &xi in x {
            let yi = self.b0 * xi + z1;
            z1 = self.b1 * xi - self.a1 * yi + z2;
            z2 = self.b2 * xi - self.a2 * yi;
            y.push(yi);
        }
    }
}

/// Digital Butterworth lowpass sections for `order` and `cutoff` (fraction
/// of Nyquist), via pole prewarping and the bilinear transform.
fn design_lowpass(order: usize, cutoff: f64) -> Vec<Biquad> {
    let warped = (std::f64::consts::PI * cutoff / 2.0).tan();
    let n = order;
    let mut sections = Vec::new();

    // Conjugate pole pairs of the analog prototype.
    let n_pairs = n / 2;
    for k in 0..n_pairs {
        let theta = std::f64::consts::PI * (2.0 * k as f64 + 1.0 + n as f64) / (2.0 * n as f64);
        let (sr, si) = (warped * theta.cos(), warped * theta.sin());
        // bilinear: z = (1 + s) / (1 - s)
        let denom = (1.0 - sr) * (1.0 - sr) + si * si;
        let zr = (1.0 - sr * sr - si * si) / denom;
        let zi = 2.0 * si / denom;
        let a1 = -2.0 * zr;
        let a2 = zr * zr + zi * zi;
        // double zero at z = -1, gain set for unity DC
        let g = (1.0 + a1 + a2) / 4.0;
        sections.push(Biquad {
            b0: g,
            b1: 2.0 * g,
            b2: g,
            a1,
            a2,
        });
    }

    if n % 2 == 1 {
        // real pole at s = -warped
        let zp = (1.0 - warped) / (1.0 + warped);
        let a1 = -zp;
        let g = (1.0 + a1) / 2.0;
        sections.push(Biquad {
            b0: g,
            b1: g,
            b2: 0.0,
            a1,
            a2: 0.0,
        });
    }
    sections
}

/// Squared magnitude of the designed filter at digital frequency
/// `omega` (radians/sample); closed form for the bilinear-transformed
/// Butterworth response, used as the test oracle.
pub fn butterworth_magnitude_sq(order: usize, cutoff: f64, omega: f64) -> f64 {
    let ratio = (omega / 2.0).tan() / (std::f64::consts::PI * cutoff / 2.0).tan();
    1.0 / (1.0 + ratio.powi(2 * order as i32))
}

/// Zero-phase (forward-backward) Butterworth lowpass. Output is clamped to
/// the 16-bit range.
pub fn butterworth_lowpass(sig: &AudioSignal, order: usize, cutoff: f64) -> Result<AudioSignal> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "cutoff {cutoff} outside (0, 1)"
        )));
    }
    if order < 1 {
        return Err(Error::InvalidArgument("filter order must be >= 1".into()));
    }
    let sections = design_lowpass(order, cutoff);

    let mut data: Vec<f64> = sig.samples.iter().map(|&s| s as f64).collect();
    let mut scratch = Vec::with_capacity(data.len());
    for pass in 0..2 {
        for sec in &sections {
            sec.filter(&data, &mut scratch);
            std::mem::swap(&mut data, &mut scratch);
        }
        if pass == 0 {
            data.reverse();
        } else {
            data.reverse();
        }
    }

    let samples = data
        .iter()
        .map(|&v| v.round().clamp(-32768.0, 32767.0) as i16)
        .collect();
    AudioSignal::new(samples, sig.sample_rate)
}

/// Convolution with a unit-sum Hann window, symmetric edge handling.
pub fn hanning_smooth(sig: &AudioSignal, window_len: usize) -> Result<AudioSignal> {
    if window_len % 2 == 0 || window_len < 3 {
        return Err(Error::InvalidArgument(format!(
            "hann window length {window_len} must be odd and >= 3"
        )));
    }
    let mut kernel: Vec<f64> = (0..window_len)
        .map(|k| {
            0.5 * (1.0
                - (2.0 * std::f64::consts::PI * k as f64 / (window_len - 1) as f64).cos())
        })
        .collect();
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }

    let n = sig.len() as isize;
    let half = (window_len / 2) as isize;
    let reflect = |i: isize| -> usize {
        let j = if i < 0 { -i - 1 } else if i >= n { 2 * n - 1 - i } else { i };
        j.clamp(0, n - 1) as usize
    };
    let samples = (0..n)
        .map(|i| {
            let acc: f64 = kernel
                .iter()
                .enumerate()
                .map(|(k, &w)| w * sig.samples[reflect(i + k as isize - half)] as f64)
                .sum();
            acc.round().clamp(-32768.0, 32767.0) as i16
        })
        .collect();
    AudioSignal::new(samples, sig.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(len: usize, omega: f64, amp: f64) -> AudioSignal {
        AudioSignal::new(
            (0..len).map(|i| (amp * (omega * i as f64).sin()) as i16).collect(),
            16000,
        )
        .unwrap()
    }

    fn rms(s: &AudioSignal) -> f64 {
        (s.samples.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / s.len() as f64).sqrt()
    }

    #[test]
    fn dc_passes_unchanged_within_one_step() {
        for &level in &[0i16, 1000, -20000, 32767] {
            let sig = AudioSignal::new(vec![level; 512], 8000).unwrap();
            let out = butterworth_lowpass(&sig, 4, 0.5).unwrap();
            for &s in &out.samples {
                assert!((s as i32 - level as i32).abs() <= 1, "{s} vs {level}");
            }
        }
    }

    #[test]
    fn stopband_tone_is_crushed() {
        // 0.95 Nyquist, order 4, cutoff 0.5; forward-backward doubles the
        // attenuation so RMS drops far below the 10% oracle bound
        let omega = 0.95 * std::f64::consts::PI;
        let sig = sine(4096, omega, 20000.0);
        let out = butterworth_lowpass(&sig, 4, 0.5).unwrap();
        let expected_gain = butterworth_magnitude_sq(4, 0.5, omega); // |H|^2 = squared once more by two passes
        assert!(expected_gain < 1e-8);
        assert!(rms(&out) < 0.1 * rms(&sig), "rms {} vs {}", rms(&out), rms(&sig));
    }

    #[test]
    fn passband_tone_survives_within_two_percent() {
        let omega = 0.1 * std::f64::consts::PI;
        let sig = sine(8192, omega, 20000.0);
        let out = butterworth_lowpass(&sig, 4, 0.8).unwrap();
        let ratio = rms(&out) / rms(&sig);
        let expected = butterworth_magnitude_sq(4, 0.8, omega); // two passes: |H|^2
        assert!((ratio - expected).abs() < 0.02, "ratio {ratio} expected {expected}");
        assert!((ratio - 1.0).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn filtered_tone_tracks_analytic_response_midband() {
        // single-pass magnitude comparison through the closed form
        let omega = 0.45 * std::f64::consts::PI;
        let sig = sine(8192, omega, 16000.0);
        let out = butterworth_lowpass(&sig, 3, 0.4).unwrap();
        let expected = butterworth_magnitude_sq(3, 0.4, omega); // fwd+bwd = |H|^2
        let ratio = rms(&out) / rms(&sig);
        assert!(
            (ratio - expected).abs() < 0.03,
            "ratio {ratio} expected {expected}"
        );
    }

    #[test]
    fn invalid_cutoff_rejected() {
        let sig = sine(64, 0.1, 100.0);
        assert!(butterworth_lowpass(&sig, 4, 0.0).is_err());
        assert!(butterworth_lowpass(&sig, 4, 1.0).is_err());
        assert!(butterworth_lowpass(&sig, 0, 0.5).is_err());
    }

    #[test]
    fn hann_constant_unchanged_and_impulse_gives_kernel() {
        let sig = AudioSignal::new(vec![5000; 100], 8000).unwrap();
        let out = hanning_smooth(&sig, 5).unwrap();
        assert_eq!(out.samples, sig.samples);

        let mut imp = vec![0i16; 11];
        imp[5] = 10000;
        let out = hanning_smooth(&AudioSignal::new(imp, 8000).unwrap(), 5).unwrap();
        // unit-sum Hann of length 5 is [0, 0.25, 0.5, 0.25, 0]
        assert_eq!(out.samples[4], 2500);
        assert_eq!(out.samples[5], 5000);
        assert_eq!(out.samples[6], 2500);
        assert_eq!(out.samples[3], 0);
    }

    #[test]
    fn hann_kills_nyquist_tone() {
        let amp = 10000i16;
        let sig = AudioSignal::new(
            (0..256).map(|i| if i % 2 == 0 { amp } else { -amp }).collect(),
            8000,
        )
        .unwrap();
        let out = hanning_smooth(&sig, 5).unwrap();
        // the frequency-response bound governs steady state; skip the
        // half-window edge samples
        let peak = out.samples[2..254]
            .iter()
            .map(|s| s.unsigned_abs())
            .max()
            .unwrap();
        assert!(f64::from(peak) < 0.15 * f64::from(amp), "peak {peak}");
    }

    #[test]
    fn even_window_rejected_and_length_preserved() {
        let sig = sine(77, 0.2, 1000.0);
        assert!(hanning_smooth(&sig, 4).is_err());
        assert_eq!(hanning_smooth(&sig, 5).unwrap().len(), 77);
        assert_eq!(butterworth_lowpass(&sig, 4, 0.5).unwrap().len(), 77);
    }
}
