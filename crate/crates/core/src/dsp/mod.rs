//! Signal-processing primitives shared by the EEG and speech pipelines.
//!
//! Every operation here is a pure function of its inputs: buffers are taken by
//! reference and a new buffer is returned.

mod audio;
mod filter;
mod resample;
pub mod spectrum;

pub use audio::{read_wav, write_wav};
pub use filter::{bandpass_filter, notch_filter, Biquad, Sos};
pub use resample::resample;

use crate::{Error, Result};

/// Raw multichannel time series.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBuffer {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
    channel_names: Vec<String>,
}

impl SignalBuffer {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32, channel_names: Vec<String>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidArgument("signal needs at least one channel".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if channel_names.len() != channels.len() {
            return Err(Error::Shape(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                channels.len()
            )));
        }
        let n = channels[0].len();
        if let Some(bad) = channels.iter().position(|c| c.len() != n) {
            return Err(Error::Shape(format!(
                "channel {bad} has {} samples, channel 0 has {n}",
                channels[bad].len()
            )));
        }
        Ok(Self { channels, sample_rate, channel_names })
    }

    /// Single-channel buffer named `mono`.
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate, vec!["mono".to_string()])
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn num_samples(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.num_samples() == 0
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.num_samples() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// New buffer holding the named channels in the requested order.
    pub fn select_channels<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let mut out = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            let idx = self
                .channel_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::MissingChannel(name.to_string()))?;
            out.push(self.channels[idx].clone());
        }
        Self::new(out, self.sample_rate, names.iter().map(|n| n.as_ref().to_string()).collect())
    }

    /// Cross-channel mean as a single-channel buffer.
    pub fn to_mono(&self) -> Self {
        if self.num_channels() == 1 {
            return self.clone();
        }
        let c = self.num_channels() as f64;
        let mixed = (0..self.num_samples())
            .map(|i| self.channels.iter().map(|ch| ch[i]).sum::<f64>() / c)
            .collect();
        Self { channels: vec![mixed], sample_rate: self.sample_rate, channel_names: vec!["mono".into()] }
    }

    pub(crate) fn map_channels<F>(&self, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        Self {
            channels: self.channels.iter().map(|c| f(c)).collect(),
            sample_rate: self.sample_rate,
            channel_names: self.channel_names.clone(),
        }
    }

    pub(crate) fn with_channels(&self, channels: Vec<Vec<f64>>, sample_rate: u32) -> Self {
        Self { channels, sample_rate, channel_names: self.channel_names.clone() }
    }
}

/// Window length and hop, both in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub window_seconds: f64,
    pub hop_seconds: f64,
    /// Keep a recording shorter than one window as a single zero-padded segment.
    pub allow_short: bool,
}

impl WindowSpec {
    pub fn new(window_seconds: f64, hop_seconds: f64, allow_short: bool) -> Result<Self> {
        if !(window_seconds.is_finite() && window_seconds > 0.0) || !(hop_seconds.is_finite() && hop_seconds > 0.0) {
            return Err(Error::InvalidArgument("window and hop must be positive".into()));
        }
        if hop_seconds > window_seconds {
            return Err(Error::InvalidArgument(format!(
                "hop {hop_seconds} s exceeds window {window_seconds} s"
            )));
        }
        Ok(Self { window_seconds, hop_seconds, allow_short })
    }

    /// Non-overlapping windows (`hop == window`).
    pub fn tiling(window_seconds: f64) -> Result<Self> {
        Self::new(window_seconds, window_seconds, false)
    }

    pub fn window_samples(&self, rate: u32) -> usize {
        (self.window_seconds * rate as f64).round() as usize
    }

    pub fn hop_samples(&self, rate: u32) -> usize {
        (self.hop_seconds * rate as f64).round() as usize
    }
}

/// Windowed tensor of shape segments × channels × samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTensor {
    segments: usize,
    channels: usize,
    samples: usize,
    data: Vec<f64>,
}

impl SegmentTensor {
    pub fn new(segments: usize, channels: usize, samples: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != segments * channels * samples {
            return Err(Error::Shape(format!(
                "{} values for shape ({segments}, {channels}, {samples})",
                data.len()
            )));
        }
        Ok(Self { segments, channels, samples, data })
    }

    pub fn empty(channels: usize, samples: usize) -> Self {
        Self { segments: 0, channels, samples, data: Vec::new() }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.segments, self.channels, self.samples)
    }

    pub fn num_segments(&self) -> usize {
        self.segments
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn samples_per_segment(&self) -> usize {
        self.samples
    }

    /// All channels of one segment, channel-major.
    pub fn segment(&self, s: usize) -> &[f64] {
        let len = self.channels * self.samples;
        &self.data[s * len..(s + 1) * len]
    }

    pub fn row(&self, s: usize, c: usize) -> &[f64] {
        let start = (s * self.channels + c) * self.samples;
        &self.data[start..start + self.samples]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Subtracts the instantaneous cross-channel mean from every channel.
pub fn average_rereference(sig: &SignalBuffer) -> Result<SignalBuffer> {
    let c = sig.num_channels();
    if c < 2 {
        return Err(Error::InvalidArgument("average reference needs at least two channels".into()));
    }
    let n = sig.num_samples();
    let mut mean = vec![0.0; n];
    for ch in sig.channels() {
        for (m, &x) in mean.iter_mut().zip(ch) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= c as f64;
    }
    Ok(sig.map_channels(|ch| ch.iter().zip(&mean).map(|(x, m)| x - m).collect()))
}

/// Cuts the signal into fixed-length windows.
///
/// For a signal of `n` samples, window `w` and hop `h` (in samples) the
/// segment count is `(n - w) / h + 1`; samples past the last full window are
/// dropped. A signal shorter than one window becomes a single zero-padded
/// segment when `spec.allow_short` is set.
pub fn window_segments(sig: &SignalBuffer, spec: &WindowSpec) -> Result<SegmentTensor> {
    let n = sig.num_samples();
    if n == 0 {
        return Err(Error::EmptySignal);
    }
    let win = spec.window_samples(sig.sample_rate());
    let hop = spec.hop_samples(sig.sample_rate());
    if win == 0 || hop == 0 {
        return Err(Error::InvalidArgument("window shorter than one sample".into()));
    }
    let c = sig.num_channels();
    if n < win {
        if !spec.allow_short {
            return Err(Error::TooShort { samples: n, window: win });
        }
        let mut data = vec![0.0; c * win];
        for (ci, ch) in sig.channels().iter().enumerate() {
            data[ci * win..ci * win + n].copy_from_slice(ch);
        }
        return SegmentTensor::new(1, c, win, data);
    }
    let count = (n - win) / hop + 1;
    let mut data = Vec::with_capacity(count * c * win);
    for s in 0..count {
        let start = s * hop;
        for ch in sig.channels() {
            data.extend_from_slice(&ch[start..start + win]);
        }
    }
    SegmentTensor::new(count, c, win, data)
}

/// Frame length used by [`trim_silence`].
pub const SILENCE_FRAME_SECONDS: f64 = 0.025;

/// Removes leading and trailing 25 ms frames whose RMS lies more than
/// `threshold_db` below the loudest frame. Interior frames are kept.
///
/// Returns `Ok(None)` when every frame is silent.
pub fn trim_silence(sig: &SignalBuffer, threshold_db: f64) -> Result<Option<SignalBuffer>> {
    if sig.num_channels() != 1 {
        return Err(Error::InvalidArgument("silence trimming expects a mono signal".into()));
    }
    let x = sig.channel(0);
    let frame = ((SILENCE_FRAME_SECONDS * sig.sample_rate() as f64).round() as usize).max(1);
    let rms: Vec<f64> = x
        .chunks(frame)
        .map(|f| (f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64).sqrt())
        .collect();
    let peak = rms.iter().cloned().fold(0.0_f64, f64::max);
    if peak <= 0.0 {
        return Ok(None);
    }
    let floor = peak * 10f64.powf(threshold_db / 20.0);
    let loud = |r: &f64| *r >= floor;
    let (Some(first), Some(last)) = (rms.iter().position(loud), rms.iter().rposition(loud)) else {
        return Ok(None);
    };
    let start = first * frame;
    let end = ((last + 1) * frame).min(x.len());
    Ok(Some(sig.with_channels(vec![x[start..end].to_vec()], sig.sample_rate())))
}

/// Sliding median with edge replication.
pub fn median_denoise(sig: &SignalBuffer, kernel: usize) -> Result<SignalBuffer> {
    if kernel < 3 || kernel.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("median kernel must be odd and >= 3, got {kernel}")));
    }
    Ok(sig.map_channels(|x| median_filter(x, kernel)))
}

fn median_filter(x: &[f64], kernel: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let half = kernel / 2;
    let mut window = vec![0.0; kernel];
    (0..n)
        .map(|i| {
            for (k, w) in window.iter_mut().enumerate() {
                let j = (i + k).saturating_sub(half).min(n - 1);
                *w = x[j];
            }
            window.sort_unstable_by(f64::total_cmp);
            window[half]
        })
        .collect()
}

/// Scales all channels jointly so that the largest absolute sample is 1.
/// An all-zero signal is returned unchanged.
pub fn amplitude_normalize(sig: &SignalBuffer) -> Result<SignalBuffer> {
    if sig.is_empty() {
        return Err(Error::EmptySignal);
    }
    let peak = sig
        .channels()
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Ok(sig.clone());
    }
    Ok(sig.map_channels(|c| c.iter().map(|v| v / peak).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mono(x: Vec<f64>, rate: u32) -> SignalBuffer {
        SignalBuffer::mono(x, rate).unwrap()
    }

    #[test]
    fn rejects_ragged_channels() {
        let err = SignalBuffer::new(vec![vec![0.0; 3], vec![0.0; 2]], 10, vec!["a".into(), "b".into()]);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn rereference_constants() {
        let sig = SignalBuffer::new(vec![vec![1.0; 8], vec![3.0; 8]], 10, vec!["a".into(), "b".into()]).unwrap();
        let out = average_rereference(&sig).unwrap();
        assert!(out.channel(0).iter().all(|&v| v == -1.0));
        assert!(out.channel(1).iter().all(|&v| v == 1.0));
        // idempotent on zero-mean input
        assert_eq!(average_rereference(&out).unwrap(), out);
    }

    #[test]
    fn rereference_needs_two_channels() {
        assert!(average_rereference(&mono(vec![1.0; 4], 10)).is_err());
    }

    #[test]
    fn eeg_tiling_counts() {
        let sig = mono(vec![0.0; 300 * 250], 250);
        let seg = window_segments(&sig, &WindowSpec::tiling(10.0).unwrap()).unwrap();
        assert_eq!(seg.shape(), (30, 1, 2500));
    }

    #[test]
    fn speech_overlap_counts() {
        let sig = mono(vec![0.0; 20 * 16_000], 16_000);
        let spec = WindowSpec::new(5.0, 2.5, true).unwrap();
        let seg = window_segments(&sig, &spec).unwrap();
        assert_eq!(seg.shape(), (7, 1, 80_000));
    }

    #[test]
    fn short_recording_padded() {
        let x: Vec<f64> = (0..3 * 16_000).map(|i| (i % 7) as f64 + 1.0).collect();
        let sig = mono(x.clone(), 16_000);
        let spec = WindowSpec::new(5.0, 2.5, true).unwrap();
        let seg = window_segments(&sig, &spec).unwrap();
        assert_eq!(seg.shape(), (1, 1, 80_000));
        assert_eq!(&seg.row(0, 0)[..x.len()], &x[..]);
        assert!(seg.row(0, 0)[x.len()..].iter().all(|&v| v == 0.0));

        let strict = WindowSpec::new(5.0, 2.5, false).unwrap();
        assert!(matches!(window_segments(&sig, &strict), Err(Error::TooShort { .. })));
    }

    #[test]
    fn empty_signal_rejected() {
        let sig = mono(vec![], 100);
        assert!(matches!(
            window_segments(&sig, &WindowSpec::tiling(1.0).unwrap()),
            Err(Error::EmptySignal)
        ));
    }

    #[test]
    fn window_spec_rejects_hop_longer_than_window() {
        assert!(WindowSpec::new(1.0, 2.0, false).is_err());
    }

    #[test]
    fn trim_tone_between_silences() {
        let rate = 16_000;
        let mut x = vec![0.0; rate as usize];
        x.extend((0..2 * rate as usize).map(|i| (2.0 * std::f64::consts::PI * 220.0 * i as f64 / rate as f64).sin()));
        x.extend(vec![0.0; rate as usize]);
        let out = trim_silence(&mono(x, rate), -40.0).unwrap().unwrap();
        let d = out.duration();
        assert!((2.0..=2.1).contains(&d), "duration {d}");
    }

    #[test]
    fn trim_keeps_loud_signal() {
        let x: Vec<f64> = (0..8000).map(|i| (i as f64 * 0.3).sin()).collect();
        let sig = mono(x, 16_000);
        assert_eq!(trim_silence(&sig, -40.0).unwrap().unwrap(), sig);
    }

    #[test]
    fn trim_all_silent_is_none() {
        assert!(trim_silence(&mono(vec![0.0; 1000], 16_000), -40.0).unwrap().is_none());
    }

    #[test]
    fn median_removes_impulse() {
        let out = median_denoise(&mono(vec![0.0, 0.0, 10.0, 0.0, 0.0], 10), 3).unwrap();
        assert_eq!(out.channel(0), &[0.0; 5]);
    }

    #[test]
    fn median_keeps_ramp() {
        let ramp: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let out = median_denoise(&mono(ramp.clone(), 10), 5).unwrap();
        assert_eq!(out.channel(0), &ramp[..]);
    }

    #[test]
    fn median_rejects_even_kernel() {
        assert!(median_denoise(&mono(vec![1.0; 4], 10), 4).is_err());
        assert!(median_denoise(&mono(vec![1.0; 4], 10), 1).is_err());
    }

    #[test]
    fn normalize_examples() {
        let out = amplitude_normalize(&mono(vec![0.5, -0.25], 10)).unwrap();
        assert_eq!(out.channel(0), &[1.0, -0.5]);
        let z = amplitude_normalize(&mono(vec![0.0; 3], 10)).unwrap();
        assert_eq!(z.channel(0), &[0.0; 3]);
    }

    fn brute_median(x: &[f64], k: usize) -> Vec<f64> {
        let n = x.len() as isize;
        let h = (k / 2) as isize;
        (0..n)
            .map(|i| {
                let mut w: Vec<f64> = (i - h..=i + h).map(|j| x[j.clamp(0, n - 1) as usize]).collect();
                w.sort_by(|a, b| a.partial_cmp(b).unwrap());
                w[k / 2]
            })
            .collect()
    }

    proptest! {
        #[test]
        fn median_matches_brute_force(x in proptest::collection::vec(-100.0f64..100.0, 1..64), half in 1usize..4) {
            let k = 2 * half + 1;
            let out = median_denoise(&mono(x.clone(), 10), k).unwrap();
            prop_assert_eq!(out.channel(0).to_vec(), brute_median(&x, k));
        }

        #[test]
        fn normalized_peak_is_zero_or_one(x in proptest::collection::vec(-1e3f64..1e3, 1..64)) {
            let out = amplitude_normalize(&mono(x, 10)).unwrap();
            let peak = out.channel(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(peak == 0.0 || (peak - 1.0).abs() < 1e-15);
        }

        #[test]
        fn rereferenced_channel_mean_vanishes(
            rows in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 16), 2..6)
        ) {
            let names = (0..rows.len()).map(|i| format!("c{i}")).collect();
            let out = average_rereference(&SignalBuffer::new(rows, 100, names).unwrap()).unwrap();
            for i in 0..16 {
                let m: f64 = out.channels().iter().map(|c| c[i]).sum::<f64>() / out.num_channels() as f64;
                prop_assert!(m.abs() < 1e-9);
            }
        }

        #[test]
        fn tiling_reproduces_prefix(x in proptest::collection::vec(-1.0f64..1.0, 10..200), w in 1usize..10) {
            let sig = mono(x.clone(), 10);
            let spec = WindowSpec::tiling(w as f64 / 10.0).unwrap();
            if let Ok(seg) = window_segments(&sig, &spec) {
                let s = seg.num_segments();
                prop_assert_eq!(seg.data(), &x[..s * w]);
            }
        }
    }
}
