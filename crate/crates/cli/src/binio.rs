//! Little-endian binary formats: `SENS` checkpoints and `FEAT` feature files.

use std::path::Path;

use sens_asr_core::params::ParamSet;
use sens_asr_core::Tensor;

use crate::error::{read_bytes, write_bytes, CliError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SENS";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const FEATURE_MAGIC: &[u8; 4] = b"FEAT";

/// Bounds-checked little-endian cursor.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                CliError::format(format!("{} truncated at byte {}", self.what, self.pos))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expected {
            return Err(CliError::format(format!(
                "{}: bad magic {:?}, expected {:?}",
                self.what,
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| CliError::format(format!("{}: element count overflows", self.what)))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(CliError::format(format!(
                "{}: {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| CliError::format(format!("{what} {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, data: &[f32]) {
    out.reserve(data.len() * 4);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes named tensors in the given order.
pub fn encode_checkpoint<'a>(
    tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<f32>)>,
) -> Result<Vec<u8>> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_u32(&mut out, tensors.len(), "tensor count")?;
    for (name, t) in tensors {
        let len = u16::try_from(name.len())
            .map_err(|_| CliError::format(format!("tensor name of {} bytes is too long", name.len())))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let rank = u8::try_from(t.rank())
            .map_err(|_| CliError::format(format!("tensor {name} has rank {}", t.rank())))?;
        out.push(rank);
        for &d in t.shape() {
            put_u32(&mut out, d, "dimension")?;
        }
        put_f32s(&mut out, t.data());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut r = Reader::new(bytes, "checkpoint");
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CliError::format(format!(
            "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| CliError::format("checkpoint tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u8()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let n = n.ok_or_else(|| CliError::format(format!("tensor {name}: size overflows")))?;
        let data = r.f32s(n)?;
        let tensor = Tensor::new(&shape, data)
            .map_err(|e| CliError::format(format!("tensor {name}: {e}")))?;
        out.push((name, tensor));
    }
    r.finish()?;
    Ok(out)
}

pub fn save_checkpoint(path: &Path, params: &ParamSet<f32>) -> Result<()> {
    write_bytes(path, &encode_checkpoint(params.iter())?)
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    decode_checkpoint(&read_bytes(path)?)
}

/// `[frames × dim]` row-major features.
pub fn encode_features(features: &Tensor<f32>) -> Result<Vec<u8>> {
    if features.rank() != 2 {
        return Err(CliError::format(format!(
            "feature tensors must be 2-D, got shape {:?}",
            features.shape()
        )));
    }
    let (frames, dim) = features.dims2();
    let mut out = Vec::with_capacity(12 + 4 * features.len());
    out.extend_from_slice(FEATURE_MAGIC);
    put_u32(&mut out, frames, "frame count")?;
    put_u32(&mut out, dim, "feature dimension")?;
    put_f32s(&mut out, features.data());
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut r = Reader::new(bytes, "feature file");
    r.magic(FEATURE_MAGIC)?;
    let frames = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let n = frames
        .checked_mul(dim)
        .ok_or_else(|| CliError::format("feature file: size overflows"))?;
    let data = r.f32s(n)?;
    r.finish()?;
    Tensor::new(&[frames, dim], data).map_err(|e| CliError::format(format!("feature file: {e}")))
}

pub fn save_features(path: &Path, features: &Tensor<f32>) -> Result<()> {
    write_bytes(path, &encode_features(features)?)
}

pub fn load_features(path: &Path) -> Result<Tensor<f32>> {
    decode_features(&read_bytes(path)?).map_err(|e| match e {
        CliError::Core(sens_asr_core::Error::Format(m)) => {
            CliError::format(format!("{}: {m}", path.display()))
        }
        other => other,
    })
}
