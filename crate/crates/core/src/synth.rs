//! Synthetic cohorts in the on-disk layout of real data, with tunable
//! class signal per modality.
//!
//! Per subject: 29-channel EEG (pink noise plus a 10 Hz rhythm whose
//! amplitude carries the class shift), interview WAVs (harmonic tones with
//! syllable-rate envelopes and a class-dependent F0) and one text embedding
//! per recording (Gaussian with a class-dependent mean). Every subject also
//! draws private random effects shared by all of its recordings.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{write_wav, SignalBuffer};
use crate::eeg::{default_branch1_channels, BRANCH1_RATE};
use crate::speech::SPEECH_RATE;
use crate::store::{write_tensor, FeatureKind, ManifestEntry, Modality, SubjectManifest, Tdep1Tensor, TEXT_EMBEDDING_DIM};
use crate::{Error, Result, RECORDINGS_PER_SUBJECT};

const ALPHA_HZ: f64 = 10.0;
const BASE_ALPHA: f64 = 1.0;
const BASE_F0: f64 = 120.0;
const SYLLABLE_HZ: f64 = 4.0;
const HARMONICS: usize = 5;
const EDGE_SILENCE_SECONDS: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_subjects: usize,
    /// Fraction of MDD subjects.
    #[serde(default = "half")]
    pub class_balance: f64,
    /// Added to the 10 Hz amplitude of MDD subjects (noise units).
    pub eeg_alpha_shift: f64,
    /// Added to the F0 of MDD subjects, Hz.
    pub speech_f0_shift: f64,
    /// Distance between class means of each embedding coordinate.
    pub text_embedding_shift: f64,
    #[serde(default = "one")]
    pub noise_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eeg_seconds")]
    pub eeg_seconds: f64,
    /// Range of interview recording lengths, seconds.
    #[serde(default = "default_recording_seconds")]
    pub recording_seconds: (f64, f64),
    #[serde(default = "default_recordings")]
    pub recordings: usize,
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

fn default_eeg_seconds() -> f64 {
    300.0
}

fn default_recording_seconds() -> (f64, f64) {
    (5.0, 12.0)
}

fn default_recordings() -> usize {
    RECORDINGS_PER_SUBJECT
}

impl SynthSpec {
    pub fn with_shifts(n_subjects: usize, seed: u64, eeg: f64, f0: f64, text: f64) -> Self {
        Self {
            n_subjects,
            class_balance: 0.5,
            eeg_alpha_shift: eeg,
            speech_f0_shift: f0,
            text_embedding_shift: text,
            noise_scale: 1.0,
            seed,
            eeg_seconds: default_eeg_seconds(),
            recording_seconds: default_recording_seconds(),
            recordings: default_recordings(),
        }
    }

    /// Class signal well above subject variability in every modality.
    pub fn strong(n_subjects: usize, seed: u64) -> Self {
        Self::with_shifts(n_subjects, seed, 3.0, 80.0, 1.0)
    }

    /// Comparable to subject variability.
    pub fn moderate(n_subjects: usize, seed: u64) -> Self {
        Self::with_shifts(n_subjects, seed, 0.8, 25.0, 0.25)
    }

    /// No class signal at all.
    pub fn null(n_subjects: usize, seed: u64) -> Self {
        Self::with_shifts(n_subjects, seed, 0.0, 0.0, 0.0)
    }

    pub fn n_mdd(&self) -> usize {
        (self.n_subjects as f64 * self.class_balance).round() as usize
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_subjects < 2 {
            v.push(format!("n_subjects = {} (need at least 2)", self.n_subjects));
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            v.push(format!("class_balance {} outside (0, 1)", self.class_balance));
        } else if self.n_mdd() == 0 || self.n_mdd() == self.n_subjects {
            v.push("class_balance leaves one class empty".into());
        }
        for (name, x) in [
            ("eeg_alpha_shift", self.eeg_alpha_shift),
            ("speech_f0_shift", self.speech_f0_shift),
            ("text_embedding_shift", self.text_embedding_shift),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                v.push(format!("{name} must be a non-negative number, got {x}"));
            }
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            v.push(format!("noise_scale must be positive, got {}", self.noise_scale));
        }
        if !(self.eeg_seconds.is_finite() && self.eeg_seconds >= 10.0) {
            v.push(format!("eeg_seconds {} shorter than one 10 s window", self.eeg_seconds));
        }
        let (lo, hi) = self.recording_seconds;
        if !(lo > 2.0 * EDGE_SILENCE_SECONDS && hi >= lo) {
            v.push(format!("recording_seconds ({lo}, {hi}) is not a valid range"));
        }
        if !(1..=RECORDINGS_PER_SUBJECT).contains(&self.recordings) {
            v.push(format!("recordings {} outside 1..={RECORDINGS_PER_SUBJECT}", self.recordings));
        }
        if self.speech_f0_shift + BASE_F0 * 1.5 > 400.0 {
            v.push(format!("speech_f0_shift {} pushes F0 past 400 Hz", self.speech_f0_shift));
        }
        v
    }
}

/// Pink (1/f) noise via a sum of first-order sections fed by white noise.
struct PinkNoise {
    state: [f64; 7],
}

impl PinkNoise {
    fn new() -> Self {
        Self { state: [0.0; 7] }
    }

    fn next(&mut self, white: f64) -> f64 {
        let b = &mut self.state;
        b[0] = 0.99886 * b[0] + white * 0.0555179;
        b[1] = 0.99332 * b[1] + white * 0.0750759;
        b[2] = 0.96900 * b[2] + white * 0.1538520;
        b[3] = 0.86650 * b[3] + white * 0.3104856;
        b[4] = 0.55000 * b[4] + white * 0.5329522;
        b[5] = -0.7616 * b[5] - white * 0.0168980;
        let out = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + white * 0.5362;
        b[6] = white * 0.115926;
        out * 0.11
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn synth_eeg(spec: &SynthSpec, label: u8, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<f32>) {
    let rate = BRANCH1_RATE as f64;
    let n = (spec.eeg_seconds * rate).round() as usize;
    let channels = default_branch1_channels().len();
    let subject_gain = (0.25 * normal(rng)).exp();
    let amplitude = BASE_ALPHA * subject_gain + if label == 1 { spec.eeg_alpha_shift } else { 0.0 };
    let mut data = Vec::with_capacity(channels * n);
    for _ in 0..channels {
        let gain = (0.1 * normal(rng)).exp();
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut pink = PinkNoise::new();
        // warm up the slow sections
        for _ in 0..1000 {
            pink.next(normal(rng));
        }
        for i in 0..n {
            let t = i as f64 / rate;
            let rhythm = amplitude * (std::f64::consts::TAU * ALPHA_HZ * t + phase).sin();
            data.push((gain * (spec.noise_scale * pink.next(normal(rng)) + rhythm)) as f32);
        }
    }
    (vec![channels, n], data)
}

fn synth_recording(spec: &SynthSpec, f0: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let rate = SPEECH_RATE as f64;
    let (lo, hi) = spec.recording_seconds;
    let seconds = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let n = (seconds * rate).round() as usize;
    let edge = (EDGE_SILENCE_SECONDS * rate) as usize;
    let jitter = Normal::new(0.0, 0.02).expect("valid sigma");
    let syllable_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut phase = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / rate;
        let floor = 1e-4 * normal(rng);
        if i < edge || i + edge >= n {
            out.push(floor);
            continue;
        }
        // slow F0 drift around the subject's mean
        let inst_f0 = f0 * (1.0 + 0.03 * (std::f64::consts::TAU * 0.5 * t).sin());
        phase += std::f64::consts::TAU * inst_f0 / rate;
        let tone: f64 = (1..=HARMONICS).map(|h| (h as f64 * phase).sin() / h as f64).sum();
        let env = 0.5 * (1.0 - (std::f64::consts::TAU * SYLLABLE_HZ * t + syllable_phase).cos());
        let noise = 0.05 * spec.noise_scale * normal(rng);
        out.push(0.3 * env * (tone + jitter.sample(rng)) + noise + floor);
    }
    out
}

fn synth_text(spec: &SynthSpec, label: u8, offset: &[f64], rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mean = if label == 1 { 0.5 } else { -0.5 } * spec.text_embedding_shift;
    offset.iter().map(|o| (spec.noise_scale * normal(rng) + o + mean) as f32).collect()
}

fn subject_entry(kind: FeatureKind, rec: Option<usize>, path: String, dims: Vec<usize>) -> ManifestEntry {
    ManifestEntry {
        modality: kind.modality(),
        feature_kind: kind,
        recording_index: rec,
        tensor_path: path,
        dims,
        sample_rate: None,
        channel_names: None,
    }
}

/// Spreads `n_mdd` positives evenly over `n` subjects.
fn label_of(i: usize, n: usize, n_mdd: usize) -> u8 {
    u8::from((i + 1) * n_mdd / n > i * n_mdd / n)
}

/// Writes `out_dir/<subject>/…` plus one manifest per subject and returns
/// the manifests. Subject `i` draws from stream `i` of the spec seed.
pub fn generate(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<Vec<SubjectManifest>> {
    let v = spec.violations();
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    let out_dir = out_dir.as_ref();
    let n_mdd = spec.n_mdd();
    let mut manifests = Vec::with_capacity(spec.n_subjects);
    for i in 0..spec.n_subjects {
        let id = format!("S{:03}", i + 1);
        let label = label_of(i, spec.n_subjects, n_mdd);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let root = out_dir.join(&id);
        fs::create_dir_all(root.join("speech"))?;
        fs::create_dir_all(root.join("text"))?;
        let mut m = SubjectManifest::new(&id, label, &root);

        let (dims, data) = synth_eeg(spec, label, &mut rng);
        write_tensor(&Tdep1Tensor::new(dims.clone(), data)?, root.join("eeg.tdep"))?;
        let mut eeg = subject_entry(FeatureKind::RawEeg, None, "eeg.tdep".into(), dims);
        eeg.sample_rate = Some(BRANCH1_RATE);
        eeg.channel_names = Some(default_branch1_channels());
        m.entries.push(eeg);

        let f0 = BASE_F0 + 10.0 * normal(&mut rng) + if label == 1 { spec.speech_f0_shift } else { 0.0 };
        let text_offset: Vec<f64> = (0..TEXT_EMBEDDING_DIM).map(|_| 0.5 * normal(&mut rng)).collect();
        for r in 1..=spec.recordings {
            let wav = format!("speech/rec{r:02}.wav");
            write_wav(root.join(&wav), &SignalBuffer::mono(synth_recording(spec, f0, &mut rng), SPEECH_RATE)?)?;
            m.entries.push(subject_entry(FeatureKind::Wav, Some(r), wav, Vec::new()));

            let text = format!("text/rec{r:02}.tdep");
            let emb = synth_text(spec, label, &text_offset, &mut rng);
            write_tensor(&Tdep1Tensor::new(vec![TEXT_EMBEDDING_DIM], emb)?, root.join(&text))?;
            m.entries.push(subject_entry(FeatureKind::Mpnet, Some(r), text, vec![TEXT_EMBEDDING_DIM]));
        }
        m.save()?;
        manifests.push(m);
    }
    debug_assert!(manifests.iter().all(|m| m.entries.iter().any(|e| e.modality == Modality::Eeg)));
    Ok(manifests)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{load_cohort, validate_manifest};

    fn tiny(seed: u64) -> SynthSpec {
        SynthSpec { eeg_seconds: 20.0, recording_seconds: (1.0, 1.5), recordings: 3, ..SynthSpec::strong(4, seed) }
    }

    #[test]
    fn layout_validates() {
        let dir = tempfile::tempdir().unwrap();
        let ms = generate(&tiny(1), dir.path()).unwrap();
        assert_eq!(ms.len(), 4);
        assert_eq!(ms.iter().filter(|m| m.label == 1).count(), 2);
        for m in load_cohort(dir.path()).unwrap() {
            assert!(validate_manifest(&m).is_empty(), "{:?}", validate_manifest(&m));
            assert_eq!(m.entries.len(), 1 + 2 * 3);
        }
    }

    #[test]
    fn byte_identical_per_seed() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate(&tiny(7), a.path()).unwrap();
        generate(&tiny(7), b.path()).unwrap();
        for rel in ["S001/eeg.tdep", "S002/speech/rec02.wav", "S003/text/rec03.tdep", "S004/manifest.json"] {
            assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{rel}");
        }
        let c = tempfile::tempdir().unwrap();
        generate(&tiny(8), c.path()).unwrap();
        assert_ne!(fs::read(a.path().join("S001/eeg.tdep")).unwrap(), fs::read(c.path().join("S001/eeg.tdep")).unwrap());
    }

    #[test]
    fn labels_match_balance() {
        for (n, balance) in [(38, 0.5), (10, 0.3), (7, 0.5)] {
            let spec = SynthSpec { class_balance: balance, ..SynthSpec::null(n, 0) };
            let labels: Vec<u8> = (0..n).map(|i| label_of(i, n, spec.n_mdd())).collect();
            assert_eq!(labels.iter().filter(|&&l| l == 1).count(), spec.n_mdd(), "{n} {balance}");
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = SynthSpec { class_balance: 1.0, eeg_alpha_shift: -1.0, ..SynthSpec::null(1, 0) };
        match generate(&spec, tempfile::tempdir().unwrap().path()) {
            Err(Error::Config(v)) => assert_eq!(v.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pink_noise_slopes_down() {
        use crate::dsp::spectrum::Welch;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = PinkNoise::new();
        let x: Vec<f64> = (0..250 * 120).map(|_| p.next(normal(&mut rng))).collect();
        let w = Welch::new(250.0, 250, 125);
        let psd = w.psd(&x);
        // 1/f: power at 2 Hz well above power at 40 Hz
        assert!(psd[2] > 8.0 * psd[40], "{} vs {}", psd[2], psd[40]);
    }
}
