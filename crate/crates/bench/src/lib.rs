//! Deterministic inputs shared by the benchmarks.

use tridep::dsp::SignalBuffer;
use tridep::fusion::Posteriors;
use tridep::nn::SequenceInput;
use tridep::{Modality, Posterior};

/// Sum of incommensurate sines; cheap, reproducible and broadband enough
/// to exercise filters and spectra.
pub fn test_signal(n: usize, rate: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            [3.1, 10.0, 22.7, 50.0, 71.3].iter().map(|f| (2.0 * std::f64::consts::PI * f * t).sin()).sum()
        })
        .collect()
}

pub fn eeg_channel(seconds: usize) -> SignalBuffer {
    SignalBuffer::mono(test_signal(seconds * 250, 250.0), 250).expect("valid buffer")
}

pub fn sequence(rows: usize, cols: usize) -> SequenceInput {
    let data = (0..rows * cols).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
    SequenceInput::new(rows, cols, data).expect("valid input")
}

pub fn trimodal_posteriors(i: usize) -> Posteriors {
    Modality::ALL.iter().enumerate().map(|(j, &m)| (m, Posterior::from_p1(((i + 3 * j) % 97) as f64 / 97.0))).collect()
}
