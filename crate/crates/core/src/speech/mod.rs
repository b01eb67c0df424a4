//! Speech preprocessing and handcrafted MFCC / prosody features.

mod mfcc;
mod prosody;

pub use mfcc::{MfccExtractor, MFCC_COEFFS, MEL_FILTERS};
pub use prosody::{prosody, ProsodyExtractor, PROSODY_FEATURES};

use crate::dsp::{self, SegmentTensor, SignalBuffer, WindowSpec};
use crate::store::{FeatureKind, FeatureMatrix};
use crate::{Error, Result, RECORDINGS_PER_SUBJECT};

pub const SPEECH_RATE: u32 = 16_000;
pub const SEGMENT_SECONDS: f64 = 5.0;
pub const HOP_SECONDS: f64 = 2.5;
/// Samples per 5 s segment at 16 kHz.
pub const SEGMENT_SAMPLES: usize = 80_000;
pub const HOP_SAMPLES: usize = 40_000;

pub const FRAME_SECONDS: f64 = 0.025;
pub const FRAME_HOP_SECONDS: f64 = 0.010;
pub const FRAME_SAMPLES: usize = 400;
pub const FRAME_HOP_SAMPLES: usize = 160;

pub const SILENCE_THRESHOLD_DB: f64 = -40.0;
pub const MEDIAN_KERNEL: usize = 5;

/// Windowed waveform of one recording: S rows of 80 000 samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechSegmentMatrix {
    pub segments: SegmentTensor,
    /// 1-based interview item.
    pub recording_index: usize,
}

impl SpeechSegmentMatrix {
    pub fn num_segments(&self) -> usize {
        self.segments.num_segments()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        self.segments.row(s, 0)
    }
}

/// Mono → 16 kHz → peak normalize → trim silence → median denoise → 5 s
/// windows with 2.5 s hop (short recordings zero-padded to one window).
///
/// An all-silent recording yields zero segments.
pub fn preprocess_speech(wav: &SignalBuffer, recording_index: usize) -> Result<SpeechSegmentMatrix> {
    if wav.is_empty() {
        return Err(Error::EmptySignal);
    }
    let sig = dsp::resample(&wav.to_mono(), SPEECH_RATE)?;
    let sig = dsp::amplitude_normalize(&sig)?;
    let Some(sig) = dsp::trim_silence(&sig, SILENCE_THRESHOLD_DB)? else {
        return Ok(SpeechSegmentMatrix { segments: SegmentTensor::empty(1, SEGMENT_SAMPLES), recording_index });
    };
    let sig = dsp::median_denoise(&sig, MEDIAN_KERNEL)?;
    let spec = WindowSpec::new(SEGMENT_SECONDS, HOP_SECONDS, true)?;
    Ok(SpeechSegmentMatrix { segments: dsp::window_segments(&sig, &spec)?, recording_index })
}

/// Reusable MFCC + prosody extractor.
pub struct SpeechFeaturizer {
    mfcc: MfccExtractor,
    prosody: ProsodyExtractor,
}

impl Default for SpeechFeaturizer {
    fn default() -> Self {
        Self::new()
    }
}

impl SpeechFeaturizer {
    pub fn new() -> Self {
        Self { mfcc: MfccExtractor::new(), prosody: ProsodyExtractor::new() }
    }

    pub fn mfcc(&self, segment: &[f64]) -> [f64; MFCC_COEFFS] {
        self.mfcc.compute(segment)
    }

    pub fn prosody(&self, segment: &[f64]) -> [f64; PROSODY_FEATURES] {
        self.prosody.compute(segment)
    }

    /// Per-segment feature rows of one recording, `kind` ∈ {Mfcc, ProsodyMfcc}.
    pub fn featurize(&self, rec: &SpeechSegmentMatrix, kind: FeatureKind) -> Result<FeatureMatrix> {
        let cols = match kind {
            FeatureKind::Mfcc => MFCC_COEFFS,
            FeatureKind::ProsodyMfcc => MFCC_COEFFS + PROSODY_FEATURES,
            other => {
                return Err(Error::InvalidArgument(format!("{other:?} is not a handcrafted speech feature")))
            }
        };
        let mut data = Vec::with_capacity(rec.num_segments() * cols);
        for s in 0..rec.num_segments() {
            let seg = rec.row(s);
            data.extend_from_slice(&self.mfcc(seg));
            if kind == FeatureKind::ProsodyMfcc {
                data.extend_from_slice(&self.prosody(seg));
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("speech features of recording {}", rec.recording_index)));
        }
        FeatureMatrix::new(kind, rec.num_segments(), cols, data)
    }
}

/// MFCC vector of one 16 kHz segment (see [`MfccExtractor`]).
pub fn mfcc(segment: &[f64]) -> [f64; MFCC_COEFFS] {
    MfccExtractor::new().compute(segment)
}

/// Row-concatenates per-recording matrices in the given order. Empty
/// recordings are skipped; the result records one row group per kept
/// recording.
pub fn assemble_subject_speech(per_recording: &[FeatureMatrix]) -> Result<FeatureMatrix> {
    if per_recording.len() > RECORDINGS_PER_SUBJECT {
        return Err(Error::InvalidArgument(format!(
            "{} recordings exceed the {RECORDINGS_PER_SUBJECT} interview items",
            per_recording.len()
        )));
    }
    let Some(first) = per_recording.first() else {
        return Err(Error::InvalidArgument("no recordings to assemble".into()));
    };
    let (kind, cols) = (first.kind(), first.cols());
    if let Some(bad) = per_recording.iter().find(|m| m.kind() != kind || m.cols() != cols) {
        return Err(Error::Shape(format!(
            "cannot concatenate {:?}×{} with {:?}×{}",
            bad.kind(),
            bad.cols(),
            kind,
            cols
        )));
    }
    FeatureMatrix::concat(kind, cols, per_recording.iter().filter(|m| m.rows() > 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, seconds: f64, rate: u32) -> Vec<f64> {
        (0..(seconds * rate as f64) as usize)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect()
    }

    #[test]
    fn twenty_seconds_give_seven_rows() {
        let wav = SignalBuffer::mono(tone(220.0, 20.0, 16_000), 16_000).unwrap();
        let m = preprocess_speech(&wav, 1).unwrap();
        assert_eq!(m.segments.shape(), (7, 1, SEGMENT_SAMPLES));
    }

    #[test]
    fn resampled_input_counts_after_trim() {
        // 1 s silence + 20 s tone at 44.1 kHz
        let mut x = vec![0.0; 44_100];
        x.extend(tone(220.0, 20.0, 44_100));
        let m = preprocess_speech(&SignalBuffer::mono(x, 44_100).unwrap(), 3).unwrap();
        assert_eq!(m.num_segments(), 7);
        assert_eq!(m.recording_index, 3);
    }

    #[test]
    fn short_recording_single_padded_row() {
        let wav = SignalBuffer::mono(tone(220.0, 4.0, 16_000), 16_000).unwrap();
        let m = preprocess_speech(&wav, 1).unwrap();
        assert_eq!(m.num_segments(), 1);
        assert!(m.row(0)[64_000..].iter().all(|&v| v == 0.0));
        let peak = m.row(0).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(peak > 0.9 && peak <= 1.0);
    }

    #[test]
    fn silence_gives_no_rows() {
        let wav = SignalBuffer::mono(vec![0.0; 32_000], 16_000).unwrap();
        assert_eq!(preprocess_speech(&wav, 1).unwrap().num_segments(), 0);
    }

    #[test]
    fn consecutive_segments_offset_by_hop() {
        let x: Vec<f64> = (0..12 * 16_000).map(|i| 0.5 + 0.4 * ((i / 1000) % 2) as f64).collect();
        let m = preprocess_speech(&SignalBuffer::mono(x, 16_000).unwrap(), 1).unwrap();
        for s in 1..m.num_segments() {
            assert_eq!(&m.row(s)[..HOP_SAMPLES], &m.row(s - 1)[HOP_SAMPLES..]);
        }
    }

    fn matrix(rows: usize, cols: usize, base: f64) -> FeatureMatrix {
        let kind = if cols == 40 { FeatureKind::Mfcc } else { FeatureKind::ProsodyMfcc };
        FeatureMatrix::new(kind, rows, cols, (0..rows * cols).map(|i| base + i as f64).collect()).unwrap()
    }

    #[test]
    fn assemble_concatenates_in_order() {
        let a = matrix(3, 40, 0.0);
        let b = matrix(5, 40, 1000.0);
        let out = assemble_subject_speech(&[a.clone(), matrix(0, 40, 0.0), b.clone()]).unwrap();
        assert_eq!((out.rows(), out.cols()), (8, 40));
        assert_eq!(out.groups(), &[3, 5]);
        assert_eq!(&out.data()[..120], a.data());
        assert_eq!(&out.data()[120..], b.data());
    }

    #[test]
    fn assemble_full_interview() {
        let recs: Vec<_> = (0..29).map(|r| matrix(7, 46, r as f64)).collect();
        let out = assemble_subject_speech(&recs).unwrap();
        assert_eq!((out.rows(), out.cols()), (203, 46));
    }

    #[test]
    fn assemble_rejects_mixed_kinds_and_too_many() {
        assert!(assemble_subject_speech(&[matrix(1, 40, 0.0), matrix(1, 46, 0.0)]).is_err());
        let recs: Vec<_> = (0..30).map(|_| matrix(1, 40, 0.0)).collect();
        assert!(assemble_subject_speech(&recs).is_err());
    }

    #[test]
    fn featurize_shapes() {
        let wav = SignalBuffer::mono(tone(150.0, 8.0, 16_000), 16_000).unwrap();
        let rec = preprocess_speech(&wav, 2).unwrap();
        let f = SpeechFeaturizer::new();
        let m = f.featurize(&rec, FeatureKind::ProsodyMfcc).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 46));
        assert!(f.featurize(&rec, FeatureKind::Xlsr).is_err());
    }
}
