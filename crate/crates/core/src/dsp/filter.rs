use std::f64::consts::PI;

use super::SignalBuffer;
use crate::{Error, Result};

/// Butterworth order used for each band edge.
pub const BUTTERWORTH_ORDER: usize = 4;

/// Quality factor of the notch.
pub const NOTCH_Q: f64 = 30.0;

/// Second-order section with `a0` normalized to 1, run in transposed
/// direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Self { b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]], a: [a[1] / a[0], a[2] / a[0]] }
    }

    pub fn lowpass(cutoff_hz: f64, rate: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / rate;
        let (s, c) = w0.sin_cos();
        let alpha = s / (2.0 * q);
        Self::normalized([(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0], [1.0 + alpha, -2.0 * c, 1.0 - alpha])
    }

    pub fn highpass(cutoff_hz: f64, rate: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / rate;
        let (s, c) = w0.sin_cos();
        let alpha = s / (2.0 * q);
        Self::normalized([(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0], [1.0 + alpha, -2.0 * c, 1.0 - alpha])
    }

    pub fn notch(freq_hz: f64, rate: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * freq_hz / rate;
        let (s, c) = w0.sin_cos();
        let alpha = s / (2.0 * q);
        Self::normalized([1.0, -2.0 * c, 1.0], [1.0 + alpha, -2.0 * c, 1.0 - alpha])
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State that makes the section output constant for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        [g - self.b[0], z2]
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos(pub Vec<Biquad>);

impl Sos {
    /// Even-order Butterworth low-pass as a cascade of biquads.
    pub fn butterworth_lowpass(order: usize, cutoff_hz: f64, rate: f64) -> Self {
        Self(butterworth_qs(order).map(|q| Biquad::lowpass(cutoff_hz, rate, q)).collect())
    }

    pub fn butterworth_highpass(order: usize, cutoff_hz: f64, rate: f64) -> Self {
        Self(butterworth_qs(order).map(|q| Biquad::highpass(cutoff_hz, rate, q)).collect())
    }

    pub fn then(mut self, other: Sos) -> Self {
        self.0.extend(other.0);
        self
    }

    /// One causal pass starting from `state` (one `[z1, z2]` per section).
    pub fn filter_with_state(&self, x: &[f64], mut state: Vec<[f64; 2]>) -> Vec<f64> {
        let mut y = x.to_vec();
        for (sec, z) in self.0.iter().zip(state.iter_mut()) {
            let [b0, b1, b2] = sec.b;
            let [a1, a2] = sec.a;
            for v in y.iter_mut() {
                let xin = *v;
                let out = b0 * xin + z[0];
                z[0] = b1 * xin - a1 * out + z[1];
                z[1] = b2 * xin - a2 * out;
                *v = out;
            }
        }
        y
    }

    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        self.filter_with_state(x, vec![[0.0; 2]; self.0.len()])
    }

    /// Per-section steady-state for a unit step at the cascade input.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut gain = 1.0;
        self.0
            .iter()
            .map(|s| {
                let [z1, z2] = s.step_state();
                let zi = [z1 * gain, z2 * gain];
                gain *= s.dc_gain();
                zi
            })
            .collect()
    }

    /// Zero-phase forward-backward filtering with odd-reflection padding and
    /// steady-state initial conditions at both ends.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = (3 * (2 * self.0.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let zi = self.step_states();
        let scaled = |v: f64| zi.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();

        let mut y = self.filter_with_state(&ext, scaled(ext[0]));
        y.reverse();
        let mut y = self.filter_with_state(&y, scaled(y[0]));
        y.reverse();
        y.drain(..pad);
        y.truncate(n);
        y
    }
}

fn butterworth_qs(order: usize) -> impl Iterator<Item = f64> {
    assert!(order >= 2 && order.is_multiple_of(2), "butterworth order must be even");
    (0..order / 2).map(move |k| 1.0 / (2.0 * ((2 * k + 1) as f64 * PI / (2 * order) as f64).sin()))
}

/// Zero-phase band-pass: 4th-order Butterworth high-pass at `low_hz`
/// cascaded with a 4th-order Butterworth low-pass at `high_hz`.
pub fn bandpass_filter(sig: &SignalBuffer, low_hz: f64, high_hz: f64) -> Result<SignalBuffer> {
    let rate = sig.sample_rate() as f64;
    let nyquist = rate / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz) {
        return Err(Error::InvalidArgument(format!("invalid band edges {low_hz}..{high_hz} Hz")));
    }
    if high_hz >= nyquist {
        return Err(Error::InvalidArgument(format!(
            "upper band edge {high_hz} Hz is not below Nyquist ({nyquist} Hz)"
        )));
    }
    let sos = Sos::butterworth_highpass(BUTTERWORTH_ORDER, low_hz, rate)
        .then(Sos::butterworth_lowpass(BUTTERWORTH_ORDER, high_hz, rate));
    Ok(sig.map_channels(|c| sos.filtfilt(c)))
}

/// Zero-phase notch (biquad, Q = 30) at `freq_hz`.
pub fn notch_filter(sig: &SignalBuffer, freq_hz: f64) -> Result<SignalBuffer> {
    let rate = sig.sample_rate() as f64;
    if !(freq_hz > 0.0 && freq_hz < rate / 2.0) {
        return Err(Error::InvalidArgument(format!("notch frequency {freq_hz} Hz outside (0, Nyquist)")));
    }
    let sos = Sos(vec![Biquad::notch(freq_hz, rate, NOTCH_Q)]);
    Ok(sig.map_channels(|c| sos.filtfilt(c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn sine(freq: f64, rate: u32, seconds: f64) -> Vec<f64> {
        let n = (rate as f64 * seconds) as usize;
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    /// Amplitude of the FFT bin closest to `freq`.
    fn fft_amplitude(x: &[f64], rate: u32, freq: f64) -> f64 {
        let n = x.len();
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let bin = (freq * n as f64 / rate as f64).round() as usize;
        2.0 * buf[bin].norm() / n as f64
    }

    fn mono(x: Vec<f64>, rate: u32) -> SignalBuffer {
        SignalBuffer::mono(x, rate).unwrap()
    }

    #[test]
    fn bandpass_removes_dc() {
        let out = bandpass_filter(&mono(vec![5.0; 2500], 250), 0.5, 50.0).unwrap();
        let peak = out.channel(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 0.05, "peak {peak}");
    }

    #[test]
    fn bandpass_passes_10hz() {
        let x = sine(10.0, 250, 20.0);
        let y = bandpass_filter(&mono(x.clone(), 250), 0.5, 50.0).unwrap();
        let ratio = rms(y.channel(0)) / rms(&x);
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
        let gain_db = 20.0 * (fft_amplitude(y.channel(0), 250, 10.0) / fft_amplitude(&x, 250, 10.0)).log10();
        assert!(gain_db.abs() < 1.0, "gain {gain_db} dB");
    }

    #[test]
    fn bandpass_stops_100hz() {
        let x = sine(100.0, 250, 20.0);
        let y = bandpass_filter(&mono(x.clone(), 250), 0.5, 50.0).unwrap();
        assert!(rms(y.channel(0)) < 0.1 * rms(&x));
    }

    #[test]
    fn bandpass_octave_stopbands() {
        // one octave outside each edge of a 4–30 Hz band
        for f in [2.0, 60.0] {
            let x = sine(f, 250, 40.0);
            let y = bandpass_filter(&mono(x.clone(), 250), 4.0, 30.0).unwrap();
            let att = 20.0 * (fft_amplitude(y.channel(0), 250, f) / fft_amplitude(&x, 250, f)).log10();
            assert!(att <= -20.0, "{f} Hz: {att} dB");
        }
    }

    #[test]
    fn bandpass_validates_edges() {
        let s = mono(vec![0.0; 100], 250);
        assert!(bandpass_filter(&s, 0.0, 50.0).is_err());
        assert!(bandpass_filter(&s, 30.0, 20.0).is_err());
        assert!(bandpass_filter(&s, 0.5, 125.0).is_err());
    }

    #[test]
    fn notch_attenuates_mains() {
        let x = sine(50.0, 250, 20.0);
        let y = notch_filter(&mono(x.clone(), 250), 50.0).unwrap();
        assert!(rms(y.channel(0)) <= 0.1 * rms(&x));
        let att = 20.0 * (fft_amplitude(y.channel(0), 250, 50.0) / fft_amplitude(&x, 250, 50.0)).log10();
        assert!(att <= -20.0, "{att} dB");
    }

    #[test]
    fn notch_leaves_neighbours() {
        let x = sine(10.0, 250, 20.0);
        let y = notch_filter(&mono(x.clone(), 250), 50.0).unwrap();
        assert!((rms(y.channel(0)) / rms(&x) - 1.0).abs() < 0.05);
        for f in [45.0, 55.0] {
            let x = sine(f, 250, 20.0);
            let y = notch_filter(&mono(x.clone(), 250), 50.0).unwrap();
            let change = 20.0 * (fft_amplitude(y.channel(0), 250, f) / fft_amplitude(&x, 250, f)).log10();
            assert!(change.abs() < 1.0, "{f} Hz: {change} dB");
        }
    }

    #[test]
    fn notch_of_zero_is_zero() {
        let y = notch_filter(&mono(vec![0.0; 500], 250), 50.0).unwrap();
        assert!(y.channel(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn notch_validates_frequency() {
        let s = mono(vec![0.0; 100], 250);
        assert!(notch_filter(&s, 0.0).is_err());
        assert!(notch_filter(&s, 125.0).is_err());
    }

    #[test]
    fn filtering_is_deterministic() {
        let x: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let a = bandpass_filter(&mono(x.clone(), 250), 0.5, 50.0).unwrap();
        let b = bandpass_filter(&mono(x, 250), 0.5, 50.0).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn filters_are_linear(
            x in proptest::collection::vec(-1.0f64..1.0, 300),
            y in proptest::collection::vec(-1.0f64..1.0, 300),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            for f in [
                |s: &SignalBuffer| bandpass_filter(s, 0.5, 50.0).unwrap(),
                |s: &SignalBuffer| notch_filter(s, 50.0).unwrap(),
            ] {
                let lhs = f(&mono(combo.clone(), 250));
                let fx = f(&mono(x.clone(), 250));
                let fy = f(&mono(y.clone(), 250));
                let scale = lhs.channel(0).iter().fold(1e-12f64, |m, v| m.max(v.abs()));
                for i in 0..300 {
                    let rhs = a * fx.channel(0)[i] + b * fy.channel(0)[i];
                    prop_assert!((lhs.channel(0)[i] - rhs).abs() <= 1e-6 * scale);
                }
            }
        }
    }
}
