//! Weights container.
//!
//! Little-endian throughout:
//!
//! ```text
//! bytes  field
//! 8      magic "TRIPEMB1"
//! 1      filter schedule: 0 = fixed, 1 = increasing
//! 4      u32 filters per layer (fixed schedule; 0 otherwise)
//! 4      u32 num_layers
//! 4      u32 embed_dim
//! 4      u32 input_height
//! 4      u32 input_width
//! 4      u32 tensor count N
//! N x    tensor: u32 rank, rank x u32 dims, prod(dims) x f64
//! 8      u64 Adam step counter
//! N x    tensor: Adam first moments
//! N x    tensor: Adam second moments
//! ```
//!
//! Parameters are stored in network order (see [`NetworkParams`]).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{AdamState, FilterSchedule, ModelConfig, NetworkParams};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"TRIPEMB1";

pub fn write_weights<W: Write>(mut out: W, params: &NetworkParams) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let cfg = params.config();
    let (tag, filters) = match cfg.filter_schedule {
        FilterSchedule::Fixed(n) => (0u8, n),
        FilterSchedule::Increasing => (1u8, 0),
    };
    buf.push(tag);
    for v in [filters, cfg.num_layers, cfg.embed_dim, cfg.input_height, cfg.input_width] {
        put_u32(&mut buf, v)?;
    }
    put_u32(&mut buf, params.tensors().len())?;
    for t in params.tensors() {
        put_tensor(&mut buf, t)?;
    }
    buf.extend_from_slice(&params.adam.step.to_le_bytes());
    for t in params.adam.first.iter().chain(&params.adam.second) {
        put_tensor(&mut buf, t)?;
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_weights<R: Read>(mut input: R) -> Result<NetworkParams> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut r = ByteReader::new(&bytes);
    if r.take(8)? != MAGIC {
        return Err(Error::format("not a weights file (bad magic)"));
    }
    let filter_schedule = match r.u8()? {
        0 => FilterSchedule::Fixed(r.u32()? as usize),
        1 => {
            r.u32()?;
            FilterSchedule::Increasing
        }
        other => return Err(Error::format(format!("unknown filter schedule tag {other}"))),
    };
    let num_layers = r.u32()? as usize;
    let embed_dim = r.u32()? as usize;
    let input_height = r.u32()? as usize;
    let input_width = r.u32()? as usize;
    let config = ModelConfig::new(filter_schedule, num_layers, embed_dim, input_height, input_width)
        .map_err(|e| Error::format(format!("stored model config is invalid: {e}")))?;
    let count = r.u32()? as usize;
    let tensors = (0..count).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    let mut params = NetworkParams::from_tensors(config, tensors)
        .map_err(|e| Error::format(format!("stored tensors do not fit the model: {e}")))?;
    let step = r.u64()?;
    let first = (0..count).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    let second = (0..count).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    let shapes_match = |moments: &[Tensor]| {
        moments
            .iter()
            .zip(params.tensors())
            .all(|(m, p)| m.shape() == p.shape())
    };
    if !shapes_match(&first) || !shapes_match(&second) {
        return Err(Error::format("optimizer state does not match parameter shapes"));
    }
    if !r.is_done() {
        return Err(Error::format("trailing bytes after weights"));
    }
    params.adam = AdamState { step, first, second };
    Ok(params)
}

pub fn save_weights(path: impl AsRef<Path>, params: &NetworkParams) -> Result<()> {
    let mut buf = Vec::new();
    write_weights(&mut buf, params)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<NetworkParams> {
    read_weights(fs::File::open(path)?)
}

pub(crate) fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::format(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub(crate) fn put_tensor(buf: &mut Vec<u8>, t: &Tensor) -> Result<()> {
    put_u32(buf, t.rank())?;
    for &d in t.shape() {
        put_u32(buf, d)?;
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| Error::format("unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::format(format!("implausible tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| Ok(self.u32()? as usize)).collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&len| len <= (self.bytes.len() - self.pos) / 8)
            .ok_or_else(|| Error::format(format!("tensor shape {shape:?} exceeds file size")))?;
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::new(shape, data).map_err(|e| Error::format(e.to_string()))
    }

    pub(crate) fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
