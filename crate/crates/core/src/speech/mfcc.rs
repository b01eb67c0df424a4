use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

use super::{FRAME_HOP_SAMPLES, FRAME_SAMPLES, SPEECH_RATE};
use crate::dsp::spectrum::hann;

pub const MFCC_COEFFS: usize = 40;
pub const MEL_FILTERS: usize = 64;
pub const FFT_SIZE: usize = 512;
pub const LOG_FLOOR: f64 = 1e-10;
pub const MEL_HIGH_HZ: f64 = 8000.0;

pub(crate) fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub(crate) fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Segment-level MFCCs: 25 ms Hann frames every 10 ms, |FFT|² on 512 points,
/// 64 triangular mel filters spanning 0–8 kHz, natural log with a 1e-10
/// floor, orthonormal DCT-II keeping coefficients 0–39, averaged over frames.
pub struct MfccExtractor {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    /// Sparse filters: (first bin, weights).
    filters: Vec<(usize, Vec<f64>)>,
    dct: Vec<f64>,
}

impl Default for MfccExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl MfccExtractor {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);
        let bins = FFT_SIZE / 2 + 1;
        let bin_hz: Vec<f64> = (0..bins).map(|k| k as f64 * SPEECH_RATE as f64 / FFT_SIZE as f64).collect();
        let top = hz_to_mel(MEL_HIGH_HZ);
        let edges: Vec<f64> = (0..MEL_FILTERS + 2)
            .map(|i| mel_to_hz(top * i as f64 / (MEL_FILTERS + 1) as f64))
            .collect();
        let filters = (0..MEL_FILTERS)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f64)> = bin_hz
                    .iter()
                    .enumerate()
                    .filter_map(|(k, &f)| {
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                let start = weights.first().map_or(0, |w| w.0);
                (start, weights.into_iter().map(|w| w.1).collect())
            })
            .collect();
        let n = MEL_FILTERS as f64;
        let mut dct = Vec::with_capacity(MFCC_COEFFS * MEL_FILTERS);
        for k in 0..MFCC_COEFFS {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for i in 0..MEL_FILTERS {
                dct.push(scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos());
            }
        }
        Self { fft, window: hann(FRAME_SAMPLES), filters, dct }
    }

    /// Log mel energies of one frame.
    fn log_mel(&self, frame: &[f64], buf: &mut [Complex<f64>], out: &mut [f64; MEL_FILTERS]) {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < frame.len() { Complex::new(frame[i] * self.window[i], 0.0) } else { Complex::new(0.0, 0.0) };
        }
        self.fft.process(buf);
        for (o, (start, w)) in out.iter_mut().zip(&self.filters) {
            let e: f64 = w.iter().zip(&buf[*start..]).map(|(w, c)| w * c.norm_sqr()).sum();
            *o = e.max(LOG_FLOOR).ln();
        }
    }

    pub fn compute(&self, segment: &[f64]) -> [f64; MFCC_COEFFS] {
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
        let mut mel = [0.0; MEL_FILTERS];
        let mut mean_log_mel = [0.0; MEL_FILTERS];
        let frames = frame_starts(segment.len());
        for &start in &frames {
            self.log_mel(&segment[start..start + FRAME_SAMPLES], &mut buf, &mut mel);
            for (m, v) in mean_log_mel.iter_mut().zip(&mel) {
                *m += v;
            }
        }
        let count = frames.len().max(1) as f64;
        if frames.is_empty() {
            // shorter than one frame: treat as silence
            mean_log_mel = [LOG_FLOOR.ln(); MEL_FILTERS];
        } else {
            for m in &mut mean_log_mel {
                *m /= count;
            }
        }
        // DCT is linear, so the frame average commutes with it.
        let mut out = [0.0; MFCC_COEFFS];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.dct[k * MEL_FILTERS..(k + 1) * MEL_FILTERS];
            *o = row.iter().zip(&mean_log_mel).map(|(a, b)| a * b).sum();
        }
        out
    }
}

pub(crate) fn frame_starts(n: usize) -> Vec<usize> {
    if n < FRAME_SAMPLES {
        return Vec::new();
    }
    (0..=(n - FRAME_SAMPLES) / FRAME_HOP_SAMPLES).map(|f| f * FRAME_HOP_SAMPLES).collect()
}
