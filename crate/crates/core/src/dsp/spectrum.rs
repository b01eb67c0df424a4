//! Power spectral density estimation.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Welch estimator: Hann-windowed, mean-detrended segments averaged into a
/// one-sided density (units²/Hz).
pub struct Welch {
    rate: f64,
    segment: usize,
    step: usize,
    window: Vec<f64>,
    window_power: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl Welch {
    pub fn new(rate: f64, segment: usize, overlap: usize) -> Self {
        assert!(segment > 0 && overlap < segment);
        let window = hann(segment);
        let window_power = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(segment);
        Self { rate, segment, step: segment - overlap, window, window_power, fft }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..=self.segment / 2).map(|k| k as f64 * self.rate / self.segment as f64).collect()
    }

    /// PSD at [`Welch::frequencies`]. A signal shorter than one segment is
    /// treated as a single zero-padded segment.
    pub fn psd(&self, x: &[f64]) -> Vec<f64> {
        let bins = self.segment / 2 + 1;
        let mut acc = vec![0.0; bins];
        let mut buf = vec![Complex::new(0.0, 0.0); self.segment];
        let count = if x.len() < self.segment { 1 } else { (x.len() - self.segment) / self.step + 1 };
        for s in 0..count {
            let start = s * self.step;
            let chunk = &x[start..(start + self.segment).min(x.len())];
            let mean = chunk.iter().sum::<f64>() / chunk.len().max(1) as f64;
            for (i, b) in buf.iter_mut().enumerate() {
                let v = chunk.get(i).map_or(0.0, |v| v - mean);
                *b = Complex::new(v * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
        }
        let scale = 1.0 / (self.rate * self.window_power * count as f64);
        let nyquist = if self.segment.is_multiple_of(2) { Some(bins - 1) } else { None };
        for (k, a) in acc.iter_mut().enumerate() {
            *a *= scale;
            if k != 0 && Some(k) != nyquist {
                *a *= 2.0;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parseval_for_white_sequence() {
        // integral of the one-sided PSD equals the variance
        let x: Vec<f64> = (0..5000).map(|i| (((i * 7919 + 13) % 1009) as f64 / 1009.0) - 0.5).collect();
        let w = Welch::new(250.0, 250, 125);
        let psd = w.psd(&x);
        let df = 1.0;
        let total: f64 = psd.iter().sum::<f64>() * df;
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
            - (x.iter().sum::<f64>() / x.len() as f64).powi(2);
        assert!((total / var - 1.0).abs() < 0.1, "{total} vs {var}");
    }

    #[test]
    fn sine_peak_location() {
        let x: Vec<f64> = (0..2500).map(|i| (2.0 * PI * 10.0 * i as f64 / 250.0).sin()).collect();
        let w = Welch::new(250.0, 250, 125);
        let psd = w.psd(&x);
        let peak = psd.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(w.frequencies()[peak], 10.0);
    }
}
