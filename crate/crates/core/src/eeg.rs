//! EEG preprocessing branches and handcrafted per-channel descriptors.
//!
//! Branch 1 keeps 29 channels at 250 Hz and cuts 10 s windows; its segments
//! feed [`handcrafted_features`] (and externally exported LaBraM-style
//! embeddings). Branch 2 resamples to 200 Hz, keeps 19 channels and splits 5 s
//! windows into five 1 s patches for CBraMod-style encoders.

use crate::dsp::{self, spectrum::Welch, SignalBuffer, WindowSpec};
use crate::{Error, Result};

pub const BRANCH1_CHANNELS: usize = 29;
pub const BRANCH1_RATE: u32 = 250;
pub const BRANCH1_WINDOW_SECONDS: f64 = 10.0;
pub const BRANCH1_SAMPLES: usize = 2500;

pub const BRANCH2_CHANNELS: usize = 19;
pub const BRANCH2_RATE: u32 = 200;
pub const BRANCH2_WINDOW_SECONDS: f64 = 5.0;
pub const BRANCH2_SAMPLES: usize = 1000;
pub const PATCHES: usize = 5;
pub const PATCH_SAMPLES: usize = 200;

pub const MAINS_HZ: f64 = 50.0;

/// Number of handcrafted descriptors per channel.
pub const NUM_DESCRIPTORS: usize = 10;

pub const DESCRIPTOR_NAMES: [&str; NUM_DESCRIPTORS] = [
    "mean",
    "std",
    "skewness",
    "excess_kurtosis",
    "power_delta",
    "power_theta",
    "power_alpha",
    "power_beta",
    "power_gamma",
    "spectral_entropy",
];

/// Canonical frequency bands (Hz) for the band-power descriptors.
pub const BANDS: [(f64, f64); 5] = [(0.5, 4.0), (4.0, 8.0), (8.0, 13.0), (13.0, 30.0), (30.0, 50.0)];

/// Range over which spectral entropy is measured.
pub const ENTROPY_RANGE: (f64, f64) = (0.5, 50.0);

const VARIANCE_FLOOR: f64 = 1e-12;

/// Default 29-channel montage for branch 1, in 10-10 names.
pub const DEFAULT_BRANCH1_CHANNELS: [&str; BRANCH1_CHANNELS] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FT7", "FC3", "FCz", "FC4", "FT8", "T3", "C3", "Cz",
    "C4", "T4", "TP7", "CP3", "CPz", "CP4", "TP8", "T5", "P3", "Pz", "P4", "T6", "O1", "O2",
];

/// Default 19-channel 10-20 montage for branch 2 (a subset of branch 1).
pub const DEFAULT_BRANCH2_CHANNELS: [&str; BRANCH2_CHANNELS] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz", "C4", "T4", "T5", "P3", "Pz", "P4",
    "T6", "O1", "O2",
];

pub fn default_branch1_channels() -> Vec<String> {
    DEFAULT_BRANCH1_CHANNELS.iter().map(|s| s.to_string()).collect()
}

pub fn default_branch2_channels() -> Vec<String> {
    DEFAULT_BRANCH2_CHANNELS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EegBranch {
    Branch1,
    Branch2,
}

/// Segment tensor of shape S × C × T with its acquisition metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EegSegmentTensor {
    pub segments: dsp::SegmentTensor,
    pub sample_rate: u32,
    pub channel_names: Vec<String>,
    pub branch: EegBranch,
}

impl EegSegmentTensor {
    pub fn shape(&self) -> (usize, usize, usize) {
        self.segments.shape()
    }
}

/// Patched branch-2 tensor of shape S × C × P × Tp, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EegPatchTensor {
    segments: usize,
    channels: usize,
    data: Vec<f64>,
    pub channel_names: Vec<String>,
}

impl EegPatchTensor {
    /// Splits every 1000-sample window into five consecutive 200-sample patches.
    pub fn from_segments(seg: &EegSegmentTensor) -> Result<Self> {
        let (s, c, t) = seg.shape();
        if t != PATCHES * PATCH_SAMPLES {
            return Err(Error::Shape(format!("cannot patch {t}-sample windows into {PATCHES}×{PATCH_SAMPLES}")));
        }
        // (S, C, T) and (S, C, P, Tp) share the same row-major layout.
        Ok(Self { segments: s, channels: c, data: seg.segments.data().to_vec(), channel_names: seg.channel_names.clone() })
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.segments, self.channels, PATCHES, PATCH_SAMPLES)
    }

    pub fn patch(&self, s: usize, c: usize, p: usize) -> &[f64] {
        let start = ((s * self.channels + c) * PATCHES + p) * PATCH_SAMPLES;
        &self.data[start..start + PATCH_SAMPLES]
    }

    /// Inverse of patching: the contiguous T = 1000 window of `(s, c)`.
    pub fn unpatched(&self, s: usize, c: usize) -> Vec<f64> {
        (0..PATCHES).flat_map(|p| self.patch(s, c, p).iter().copied()).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Handcrafted descriptors, shape S × C × F with F = 10.
#[derive(Debug, Clone, PartialEq)]
pub struct HandcraftedEegFeatures {
    pub segments: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub descriptor_names: Vec<String>,
}

impl HandcraftedEegFeatures {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.segments, self.channels, NUM_DESCRIPTORS)
    }

    pub fn descriptors(&self, s: usize, c: usize) -> &[f64] {
        let start = (s * self.channels + c) * NUM_DESCRIPTORS;
        &self.data[start..start + NUM_DESCRIPTORS]
    }
}

/// 29 channels at 250 Hz → band-pass 0.5–50 Hz → 50 Hz notch → average
/// reference → non-overlapping 10 s windows.
pub fn preprocess_branch1<S: AsRef<str>>(raw: &SignalBuffer, channel_subset: &[S]) -> Result<EegSegmentTensor> {
    if channel_subset.len() != BRANCH1_CHANNELS {
        return Err(Error::InvalidArgument(format!(
            "branch 1 uses {BRANCH1_CHANNELS} channels, got {}",
            channel_subset.len()
        )));
    }
    if raw.sample_rate() != BRANCH1_RATE {
        return Err(Error::SampleRate { expected: BRANCH1_RATE, found: raw.sample_rate() });
    }
    let sig = raw.select_channels(channel_subset)?;
    let sig = dsp::bandpass_filter(&sig, 0.5, 50.0)?;
    let sig = dsp::notch_filter(&sig, MAINS_HZ)?;
    let sig = dsp::average_rereference(&sig)?;
    let segments = dsp::window_segments(&sig, &WindowSpec::tiling(BRANCH1_WINDOW_SECONDS)?)?;
    Ok(EegSegmentTensor {
        segments,
        sample_rate: BRANCH1_RATE,
        channel_names: sig.channel_names().to_vec(),
        branch: EegBranch::Branch1,
    })
}

/// Resample to 200 Hz → band-pass 0.3–75 Hz → 50 Hz notch → 19 channels →
/// non-overlapping 5 s windows → 5 patches of 200 samples.
pub fn preprocess_branch2<S: AsRef<str>>(raw: &SignalBuffer, channel_subset: &[S]) -> Result<EegPatchTensor> {
    if channel_subset.len() != BRANCH2_CHANNELS {
        return Err(Error::InvalidArgument(format!(
            "branch 2 uses {BRANCH2_CHANNELS} channels, got {}",
            channel_subset.len()
        )));
    }
    // Filters act per channel, so selecting first gives the same result on
    // the retained channels.
    let sig = raw.select_channels(channel_subset)?;
    let sig = dsp::resample(&sig, BRANCH2_RATE)?;
    let sig = dsp::bandpass_filter(&sig, 0.3, 75.0)?;
    let sig = dsp::notch_filter(&sig, MAINS_HZ)?;
    let segments = dsp::window_segments(&sig, &WindowSpec::tiling(BRANCH2_WINDOW_SECONDS)?)?;
    let seg = EegSegmentTensor {
        segments,
        sample_rate: BRANCH2_RATE,
        channel_names: sig.channel_names().to_vec(),
        branch: EegBranch::Branch2,
    };
    EegPatchTensor::from_segments(&seg)
}

/// Trapezoid-rule integral of `psd` over `[lo, hi]`. The PSD is linearly
/// interpolated at band edges that fall between grid points.
pub fn band_power(psd: &[f64], freqs: &[f64], band: (f64, f64)) -> f64 {
    assert_eq!(psd.len(), freqs.len(), "psd and frequency grid differ in length");
    let (lo, hi) = band;
    if psd.len() < 2 || hi <= lo {
        return 0.0;
    }
    let interp = |f: f64| -> f64 {
        let i = freqs.partition_point(|&g| g <= f).clamp(1, freqs.len() - 1);
        let (f0, f1) = (freqs[i - 1], freqs[i]);
        let t = ((f - f0) / (f1 - f0)).clamp(0.0, 1.0);
        psd[i - 1] + t * (psd[i] - psd[i - 1])
    };
    let lo = lo.max(freqs[0]);
    let hi = hi.min(freqs[freqs.len() - 1]);
    if hi <= lo {
        return 0.0;
    }
    let mut points = vec![(lo, interp(lo))];
    points.extend(freqs.iter().zip(psd).filter(|(f, _)| **f > lo && **f < hi).map(|(f, p)| (*f, *p)));
    points.push((hi, interp(hi)));
    points.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum()
}

/// Shannon entropy of the normalized spectrum divided by `ln N`.
///
/// Returns 0 for an all-zero spectrum or a single bin.
pub fn spectral_entropy(psd: &[f64]) -> f64 {
    let total: f64 = psd.iter().sum();
    if psd.len() < 2 || total <= 0.0 {
        return 0.0;
    }
    let h: f64 = psd
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum();
    (h / (psd.len() as f64).ln()).clamp(0.0, 1.0)
}

/// Mean, standard deviation, skewness and excess kurtosis (population moments).
fn moments(x: &[f64]) -> [f64; 4] {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if m2 < VARIANCE_FLOOR {
        return [mean, m2.sqrt(), 0.0, 0.0];
    }
    [mean, m2.sqrt(), m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0]
}

/// Descriptor extractor reusing one Welch plan (1 s Hann windows, 50 % overlap).
pub struct DescriptorExtractor {
    welch: Welch,
    freqs: Vec<f64>,
    entropy_bins: std::ops::Range<usize>,
}

impl DescriptorExtractor {
    pub fn new(rate: u32) -> Self {
        let seg = rate as usize;
        let welch = Welch::new(rate as f64, seg, seg / 2);
        let freqs = welch.frequencies();
        let start = freqs.partition_point(|&f| f < ENTROPY_RANGE.0);
        let end = freqs.partition_point(|&f| f <= ENTROPY_RANGE.1);
        Self { welch, freqs, entropy_bins: start..end }
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    pub fn psd(&self, x: &[f64]) -> Vec<f64> {
        self.welch.psd(x)
    }

    /// The ten descriptors of one channel window.
    pub fn describe(&self, x: &[f64]) -> [f64; NUM_DESCRIPTORS] {
        let mut out = [0.0; NUM_DESCRIPTORS];
        out[..4].copy_from_slice(&moments(x));
        let psd = self.welch.psd(x);
        for (slot, band) in out[4..9].iter_mut().zip(BANDS) {
            *slot = band_power(&psd, &self.freqs, band);
        }
        out[9] = spectral_entropy(&psd[self.entropy_bins.clone()]);
        out
    }
}

/// Per segment and channel: mean, std, skewness, excess kurtosis, δ/θ/α/β/γ
/// band power and normalized spectral entropy over 0.5–50 Hz.
pub fn handcrafted_features(seg: &EegSegmentTensor) -> Result<HandcraftedEegFeatures> {
    if seg.branch != EegBranch::Branch1 {
        return Err(Error::InvalidArgument("handcrafted features are defined on branch-1 segments".into()));
    }
    let (s, c, _) = seg.shape();
    let extractor = DescriptorExtractor::new(seg.sample_rate);
    let mut data = Vec::with_capacity(s * c * NUM_DESCRIPTORS);
    for si in 0..s {
        for ci in 0..c {
            let d = extractor.describe(seg.segments.row(si, ci));
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("EEG descriptors of segment {si}, channel {ci}")));
            }
            data.extend_from_slice(&d);
        }
    }
    Ok(HandcraftedEegFeatures {
        segments: s,
        channels: c,
        data,
        descriptor_names: DESCRIPTOR_NAMES.iter().map(|s| s.to_string()).collect(),
    })
}
