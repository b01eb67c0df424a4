use std::f64::consts::PI;

use super::SignalBuffer;
use crate::{Error, Result};

/// Kaiser window shape parameter for the anti-aliasing filter.
pub const KAISER_BETA: f64 = 8.0;

/// Half-length of the prototype filter, in multiples of `max(up, down)`.
const HALF_LEN_FACTOR: usize = 10;

/// Polyphase rational resampling with a Kaiser-windowed sinc low-pass.
///
/// The output holds `round(n * target / source)` samples. Resampling to the
/// source rate returns a copy of the input.
pub fn resample(sig: &SignalBuffer, target_rate_hz: u32) -> Result<SignalBuffer> {
    if target_rate_hz == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    let source = sig.sample_rate();
    if source == target_rate_hz {
        return Ok(sig.clone());
    }
    let g = gcd(source as u64, target_rate_hz as u64);
    let up = (target_rate_hz as u64 / g) as usize;
    let down = (source as u64 / g) as usize;
    let filter = PolyphaseFilter::new(up, down);
    let n_out = ((sig.num_samples() as f64) * target_rate_hz as f64 / source as f64).round() as usize;
    let channels = sig.channels().iter().map(|c| filter.apply(c, n_out)).collect();
    Ok(sig.with_channels(channels, target_rate_hz))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

struct PolyphaseFilter {
    up: usize,
    down: usize,
    half: usize,
    taps: Vec<f64>,
}

impl PolyphaseFilter {
    fn new(up: usize, down: usize) -> Self {
        let max_rate = up.max(down);
        let half = HALF_LEN_FACTOR * max_rate;
        let len = 2 * half + 1;
        // cutoff in cycles per upsampled sample
        let fc = 0.5 / max_rate as f64;
        let i0_beta = bessel_i0(KAISER_BETA);
        let mut taps: Vec<f64> = (0..len)
            .map(|k| {
                let m = k as f64 - half as f64;
                let ratio = m / half as f64;
                let w = bessel_i0(KAISER_BETA * (1.0 - ratio * ratio).max(0.0).sqrt()) / i0_beta;
                2.0 * fc * sinc(2.0 * fc * m) * w
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        for t in &mut taps {
            *t *= up as f64 / sum;
        }
        Self { up, down, half, taps }
    }

    fn apply(&self, x: &[f64], n_out: usize) -> Vec<f64> {
        let n = x.len() as isize;
        let up = self.up as isize;
        let half = self.half as isize;
        (0..n_out)
            .map(|m| {
                let t = (m * self.down) as isize;
                // input j contributes tap (t + half - j*up) when it lies in [0, 2*half]
                let lo = (t - half).div_euclid(up) + if (t - half).rem_euclid(up) == 0 { 0 } else { 1 };
                let hi = (t + half).div_euclid(up);
                let (lo, hi) = (lo.max(0), hi.min(n - 1));
                let mut acc = 0.0;
                let mut j = lo;
                while j <= hi {
                    acc += x[j as usize] * self.taps[(t + half - j * up) as usize];
                    j += 1;
                }
                acc
            })
            .collect()
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let y = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= y / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn sine(freq: f64, rate: u32, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect()
    }

    fn spectrum(x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
        buf[..x.len() / 2 + 1].iter().map(|c| 2.0 * c.norm() / x.len() as f64).collect()
    }

    #[test]
    fn rate_arithmetic() {
        let s = SignalBuffer::mono(vec![0.0; 250], 250).unwrap();
        assert_eq!(resample(&s, 200).unwrap().num_samples(), 200);
        let s = SignalBuffer::mono(vec![0.0; 44_100], 44_100).unwrap();
        let out = resample(&s, 16_000).unwrap();
        assert_eq!(out.num_samples(), 16_000);
        assert_eq!(out.sample_rate(), 16_000);
    }

    #[test]
    fn identity_is_bitwise() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64).sqrt()).collect();
        let s = SignalBuffer::mono(x, 250).unwrap();
        assert_eq!(resample(&s, 250).unwrap(), s);
    }

    #[test]
    fn dominant_bin_preserved() {
        let s = SignalBuffer::mono(sine(10.0, 250, 2500), 250).unwrap();
        let out = resample(&s, 200).unwrap();
        let spec = spectrum(out.channel(0));
        let peak = spec.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        // 2000 samples at 200 Hz: bin width 0.1 Hz
        assert_eq!(peak, 100);
        assert!((spec[100] - 1.0).abs() < 0.01, "amplitude {}", spec[100]);
    }

    #[test]
    fn aliasing_suppressed() {
        // 140 Hz exceeds the 100 Hz output Nyquist and would fold onto 60 Hz
        let s = SignalBuffer::mono(sine(140.0, 250, 5000), 250).unwrap();
        let out = resample(&s, 200).unwrap();
        let spec = spectrum(&out.channel(0)[200..3800]);
        let alias_bin = (60.0 * 3600.0 / 200.0) as usize;
        let alias = spec[alias_bin - 2..=alias_bin + 2].iter().cloned().fold(0.0, f64::max);
        assert!(20.0 * alias.log10() < -40.0, "alias {alias}");
    }

    #[test]
    fn upsampling_tracks_sine() {
        let s = SignalBuffer::mono(sine(5.0, 200, 400), 200).unwrap();
        let out = resample(&s, 250).unwrap();
        assert_eq!(out.num_samples(), 500);
        let expect = sine(5.0, 250, 500);
        for (i, (got, want)) in out.channel(0).iter().zip(&expect).enumerate().take(450).skip(50) {
            assert!((got - want).abs() < 1e-3, "sample {i}");
        }
    }

    #[test]
    fn zero_target_rejected() {
        let s = SignalBuffer::mono(vec![0.0; 10], 250).unwrap();
        assert!(resample(&s, 0).is_err());
    }
}
