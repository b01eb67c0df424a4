use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use super::SignalBuffer;
use crate::{Error, Result};

/// Reads a 16-bit integer or 32-bit float PCM WAV as a mono buffer in
/// `[-1, 1]`. Multichannel audio is averaged to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<SignalBuffer> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::InvalidArgument(format!("unsupported WAV encoding {fmt:?}/{bits}-bit")))
        }
    };
    let ch = spec.channels as usize;
    let mono: Vec<f64> = if ch == 1 {
        interleaved
    } else {
        interleaved.chunks_exact(ch).map(|f| f.iter().sum::<f64>() / ch as f64).collect()
    };
    SignalBuffer::mono(mono, spec.sample_rate)
}

/// Writes the first channel as 16-bit PCM, clipping to `[-1, 1]`.
pub fn write_wav(path: impl AsRef<Path>, sig: &SignalBuffer) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: sig.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &v in sig.channel(0) {
        writer.write_sample((v.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    writer.finalize()?;
    Ok(())
}
