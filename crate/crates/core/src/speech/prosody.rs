use super::mfcc::{frame_starts, LOG_FLOOR};
use super::{FRAME_HOP_SECONDS, FRAME_SAMPLES, SPEECH_RATE};

pub const PROSODY_FEATURES: usize = 6;

pub const F0_MIN_HZ: f64 = 50.0;
pub const F0_MAX_HZ: f64 = 400.0;
pub const VOICING_THRESHOLD: f64 = 0.3;

/// Pitch analysis window: two periods of the lowest admissible F0, centred
/// on each 25 ms frame.
const PITCH_WINDOW: usize = 2 * (SPEECH_RATE as usize / F0_MIN_HZ as usize);
/// Frames quieter than this (relative to the loudest frame) are pauses.
const ACTIVITY_DB: f64 = -35.0;
const ABSOLUTE_RMS_FLOOR: f64 = 1e-5;
/// Minimum envelope dip separating two syllable nuclei.
const NUCLEUS_DIP_DB: f64 = 3.0;

/// Prosodic descriptors of one segment, in this order:
/// mean log frame energy, mean F0 over voiced frames (Hz), segment RMS,
/// pause rate, phonation time (s), speech rate (nuclei per second).
pub struct ProsodyExtractor {
    min_lag: usize,
    max_lag: usize,
}

impl Default for ProsodyExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl ProsodyExtractor {
    pub fn new() -> Self {
        Self {
            min_lag: (SPEECH_RATE as f64 / F0_MAX_HZ).floor() as usize,
            max_lag: (SPEECH_RATE as f64 / F0_MIN_HZ).ceil() as usize,
        }
    }

    pub fn compute(&self, x: &[f64]) -> [f64; PROSODY_FEATURES] {
        let starts = frame_starts(x.len());
        let rms = if x.is_empty() { 0.0 } else { (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt() };
        if starts.is_empty() {
            return [LOG_FLOOR.ln(), 0.0, rms, 1.0, 0.0, 0.0];
        }
        let energies: Vec<f64> = starts
            .iter()
            .map(|&s| x[s..s + FRAME_SAMPLES].iter().map(|v| v * v).sum::<f64>())
            .collect();
        let log_energy: Vec<f64> = energies.iter().map(|e| e.max(LOG_FLOOR).ln()).collect();
        let mean_log_energy = log_energy.iter().sum::<f64>() / log_energy.len() as f64;

        let frame_rms: Vec<f64> = energies.iter().map(|e| (e / FRAME_SAMPLES as f64).sqrt()).collect();
        let loudest = frame_rms.iter().cloned().fold(0.0, f64::max);
        let active_floor = (loudest * 10f64.powf(ACTIVITY_DB / 20.0)).max(ABSOLUTE_RMS_FLOOR);

        let pitches: Vec<Option<f64>> = starts
            .iter()
            .zip(&frame_rms)
            .map(|(&s, &r)| if r < active_floor { None } else { self.frame_pitch(x, s + FRAME_SAMPLES / 2) })
            .collect();
        let voiced: Vec<f64> = pitches.iter().flatten().copied().collect();
        let n_frames = starts.len() as f64;
        let mean_f0 = if voiced.is_empty() { 0.0 } else { voiced.iter().sum::<f64>() / voiced.len() as f64 };
        let pause_rate = 1.0 - voiced.len() as f64 / n_frames;
        let phonation = voiced.len() as f64 * FRAME_HOP_SECONDS;

        let db: Vec<f64> = energies.iter().map(|e| 10.0 * e.max(LOG_FLOOR).log10()).collect();
        let nuclei = count_nuclei(&smooth3(&db), &pitches);
        let speech_rate = nuclei as f64 / (x.len() as f64 / SPEECH_RATE as f64);

        [mean_log_energy, mean_f0, rms, pause_rate, phonation, speech_rate]
    }

    /// F0 from the normalized autocorrelation of the pitch window centred on
    /// `center`; `None` when the best peak does not exceed the voicing
    /// threshold.
    fn frame_pitch(&self, x: &[f64], center: usize) -> Option<f64> {
        let start = center.saturating_sub(PITCH_WINDOW / 2);
        let end = (start + PITCH_WINDOW).min(x.len());
        let start = end.saturating_sub(PITCH_WINDOW);
        let w = &x[start..end];
        if w.len() <= self.max_lag + 1 {
            return None;
        }
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let w: Vec<f64> = w.iter().map(|v| v - mean).collect();
        let max_lag = self.max_lag.min(w.len() - 2);
        let r: Vec<f64> = (0..=max_lag + 1).map(|lag| normalized_autocorr(&w, lag)).collect();
        let best = r[self.min_lag..=max_lag].iter().cloned().fold(f64::MIN, f64::max);
        if best <= VOICING_THRESHOLD {
            return None;
        }
        // shortest-lag local peak close to the best one avoids octave errors
        let lag = (self.min_lag..=max_lag)
            .find(|&l| r[l] >= 0.9 * best && r[l] >= r[l - 1] && r[l] >= r[l + 1])?;
        let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 1e-12 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        let f0 = SPEECH_RATE as f64 / (lag as f64 + shift);
        (F0_MIN_HZ..=F0_MAX_HZ).contains(&f0).then_some(f0)
    }
}

fn normalized_autocorr(w: &[f64], lag: usize) -> f64 {
    let n = w.len() - lag;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, b) = (w[i], w[i + lag]);
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx <= 0.0 || yy <= 0.0 {
        0.0
    } else {
        xy / (xx * yy).sqrt()
    }
}

fn smooth3(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(x.len() - 1);
            x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Voiced local maxima of the energy envelope separated by a dip of at least
/// [`NUCLEUS_DIP_DB`].
fn count_nuclei(env: &[f64], pitches: &[Option<f64>]) -> usize {
    let n = env.len();
    let mut peaks: Vec<usize> = Vec::new();
    for i in 0..n {
        if pitches[i].is_none() {
            continue;
        }
        let left = if i > 0 { env[i - 1] } else { f64::MIN };
        let right = if i + 1 < n { env[i + 1] } else { f64::MIN };
        if !(env[i] > left && env[i] >= right) {
            continue;
        }
        match peaks.last().copied() {
            None => peaks.push(i),
            Some(prev) => {
                let dip = env[prev..=i].iter().cloned().fold(f64::MAX, f64::min);
                if dip <= env[prev].min(env[i]) - NUCLEUS_DIP_DB {
                    peaks.push(i);
                } else if env[i] > env[prev] {
                    *peaks.last_mut().unwrap() = i;
                }
            }
        }
    }
    peaks.len()
}

/// Prosody vector of one 16 kHz segment (see [`ProsodyExtractor`]).
pub fn prosody(segment: &[f64]) -> [f64; PROSODY_FEATURES] {
    ProsodyExtractor::new().compute(segment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const N: usize = 80_000;

    fn sawtooth(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64 * freq / SPEECH_RATE as f64;
                2.0 * (t - t.floor()) - 1.0
            })
            .collect()
    }

    #[test]
    fn silent_segment() {
        let p = prosody(&vec![0.0; N]);
        assert!((p[0] - LOG_FLOOR.ln()).abs() < 1e-9, "{p:?}");
        assert_eq!(p[1..], [0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn sustained_sawtooth_pitch() {
        let p = prosody(&sawtooth(100.0, N));
        assert!((95.0..=105.0).contains(&p[1]), "f0 {}", p[1]);
        assert!(p[3] < 0.1, "pause rate {}", p[3]);
        assert!(p[4] <= 5.0);
    }

    #[test]
    fn half_tone_half_silence() {
        let mut x: Vec<f64> = (0..N / 2).map(|i| 0.8 * (2.0 * PI * 200.0 * i as f64 / 16_000.0).sin()).collect();
        x.extend(vec![0.0; N / 2]);
        let p = prosody(&x);
        assert!((2.25..=2.75).contains(&p[4]), "phonation {}", p[4]);
        assert!((0.4..=0.6).contains(&p[3]), "pause {}", p[3]);
        assert!((195.0..=205.0).contains(&p[1]));
    }

    #[test]
    fn syllable_train_rate() {
        // 4 Hz amplitude bursts of a 150 Hz tone
        let x: Vec<f64> = (0..N)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                let env = (PI * 4.0 * t).sin().powi(2);
                env * (2.0 * PI * 150.0 * t).sin()
            })
            .collect();
        let p = prosody(&x);
        assert!((3.0..=5.0).contains(&p[5]), "rate {}", p[5]);
    }

    #[test]
    fn bounds_hold_for_noise() {
        let x: Vec<f64> = (0..N).map(|i| (((i * 7919) % 1013) as f64 / 1013.0) - 0.5).collect();
        let p = prosody(&x);
        assert!((0.0..=1.0).contains(&p[3]));
        assert!(p[4] <= 5.0);
        assert!(p[1] == 0.0 || (F0_MIN_HZ..=F0_MAX_HZ).contains(&p[1]));
    }
}
