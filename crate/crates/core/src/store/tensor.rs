//! TDEP1 binary tensor format.
//!
//! ```text
//! offset  size      field
//! 0       5         magic "TDEP1"
//! 5       1         dtype code (0x01 = f32 little-endian)
//! 6       1         rank r
//! 7       4·r       dims, u32 little-endian
//! 7+4r    4·Π dims  payload, row-major f32 little-endian
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 5] = b"TDEP1";
pub const DTYPE_F32LE: u8 = 0x01;
const HEADER_FIXED: usize = 7;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic: expected \"TDEP1\"")]
    BadMagic,
    #[error("unsupported dtype code {0:#04x}")]
    UnsupportedDtype(u8),
    #[error("payload holds {payload} values but dims {dims:?} require {expected}")]
    SizeMismatch { dims: Vec<usize>, expected: usize, payload: usize },
    #[error("truncated tensor file")]
    Truncated,
    #[error("dimension {0} does not fit in u32")]
    DimOverflow(usize),
    #[error("tensor io: {0}")]
    Io(#[from] std::io::Error),
}

impl TensorError {
    /// Stable numeric code per error kind.
    pub fn code(&self) -> u8 {
        match self {
            TensorError::BadMagic => 1,
            TensorError::UnsupportedDtype(_) => 2,
            TensorError::SizeMismatch { .. } => 3,
            TensorError::Truncated => 4,
            TensorError::DimOverflow(_) => 5,
            TensorError::Io(_) => 6,
        }
    }
}

/// Dense f32 tensor with row-major payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Tdep1Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tdep1Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        let expected = dims.iter().product::<usize>();
        if expected != data.len() {
            return Err(TensorError::SizeMismatch { dims, expected, payload: data.len() });
        }
        if let Some(&d) = dims.iter().find(|&&d| d > u32::MAX as usize) {
            return Err(TensorError::DimOverflow(d));
        }
        if dims.len() > u8::MAX as usize {
            return Err(TensorError::DimOverflow(dims.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self, TensorError> {
        Self::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_FIXED + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(DTYPE_F32LE);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorError> {
        let dims = parse_header(bytes)?;
        let offset = HEADER_FIXED + 4 * dims.len();
        let payload = &bytes[offset..];
        let expected = dims.iter().product::<usize>();
        if !payload.len().is_multiple_of(4) {
            return Err(TensorError::SizeMismatch { dims, expected, payload: payload.len() / 4 });
        }
        let values = payload.len() / 4;
        if values < expected {
            return Err(TensorError::Truncated);
        }
        if values > expected {
            return Err(TensorError::SizeMismatch { dims, expected, payload: values });
        }
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Ok(Self { dims, data })
    }
}

fn parse_header(bytes: &[u8]) -> Result<Vec<usize>, TensorError> {
    if bytes.len() < MAGIC.len() {
        return Err(if MAGIC.starts_with(bytes) { TensorError::Truncated } else { TensorError::BadMagic });
    }
    if &bytes[..5] != MAGIC {
        return Err(TensorError::BadMagic);
    }
    if bytes.len() < HEADER_FIXED {
        return Err(TensorError::Truncated);
    }
    if bytes[5] != DTYPE_F32LE {
        return Err(TensorError::UnsupportedDtype(bytes[5]));
    }
    let rank = bytes[6] as usize;
    if bytes.len() < HEADER_FIXED + 4 * rank {
        return Err(TensorError::Truncated);
    }
    Ok((0..rank)
        .map(|i| {
            let o = HEADER_FIXED + 4 * i;
            u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect())
}

pub fn write_tensor(t: &Tdep1Tensor, path: impl AsRef<Path>) -> Result<(), TensorError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&t.to_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tdep1Tensor, TensorError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    Tdep1Tensor::from_bytes(&bytes)
}

/// Reads only the header and returns the dims.
pub fn read_dims(path: impl AsRef<Path>) -> Result<Vec<usize>, TensorError> {
    let mut f = File::open(path)?;
    let mut head = [0u8; HEADER_FIXED];
    let n = read_up_to(&mut f, &mut head)?;
    if n < HEADER_FIXED {
        parse_header(&head[..n])?;
        return Err(TensorError::Truncated);
    }
    let rank = head[6] as usize;
    let mut rest = vec![0u8; 4 * rank];
    let m = read_up_to(&mut f, &mut rest)?;
    let mut all = head.to_vec();
    all.extend_from_slice(&rest[..m]);
    parse_header(&all)
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}
