//! Binary checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    8 bytes  "DISCOCKP"
//! version  u32      1
//! dtype    u8       0 = f32, 1 = f64 (precision the model was trained at)
//! config   u32 length + UTF-8 JSON of ModelConfig
//! count    u32
//! tensor*  u16 name length + name, u8 ndim, ndim × u32 extents,
//!          product(extents) × f64 values
//! ```
//!
//! Values are always stored as f64, so both precisions round-trip exactly.
//! Trailing bytes are rejected.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{DType, ParamStore, Real, Tensor};

use super::{Model, ModelConfig};

const MAGIC: &[u8; 8] = b"DISCOCKP";
const VERSION: u32 = 1;
const MAX_NDIM: u8 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub dtype: DType,
    pub tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn from_model<T: Real>(model: &Model<T>) -> Self {
        let tensors = model
            .params()
            .iter()
            .map(|(name, t)| {
                (
                    name.to_string(),
                    t.shape().to_vec(),
                    t.data().iter().map(|x| x.f64()).collect(),
                )
            })
            .collect();
        Checkpoint {
            config: model.config().clone(),
            dtype: T::DTYPE,
            tensors,
        }
    }

    pub fn to_model<T: Real>(&self) -> Result<Model<T>> {
        let mut store = ParamStore::new();
        for (name, shape, data) in &self.tensors {
            let t = Tensor::new(shape.clone(), data.iter().map(|&x| T::of(x)).collect())?;
            store.add(name.clone(), t)?;
        }
        Model::from_parts(self.config.clone(), store)
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(&ckpt.config)
        .map_err(|e| Error::Validation(format!("config serialization: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match ckpt.dtype {
        DType::F32 => 0,
        DType::F64 => 1,
    });
    out.extend_from_slice(&u32_len(config.len(), "config")?.to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&u32_len(ckpt.tensors.len(), "tensor count")?.to_le_bytes());
    for (name, shape, data) in &ckpt.tensors {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Validation(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        if shape.is_empty() || shape.len() > MAX_NDIM as usize {
            return Err(Error::Validation(format!("tensor {name} has {} dims", shape.len())));
        }
        out.push(shape.len() as u8);
        for &d in shape {
            out.extend_from_slice(&u32_len(d, "extent")?.to_le_bytes());
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Dimension(format!("tensor {name} data/shape mismatch")));
        }
        for &x in data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

fn u32_len(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Validation(format!("{what} {n} exceeds u32")))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::format(format!("checkpoint byte {}", self.pos), msg)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.fail(format!("truncated: need {n} more bytes")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
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

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::format("checkpoint byte 0", "bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let dtype = match r.u8()? {
        0 => DType::F32,
        1 => DType::F64,
        other => return Err(r.fail(format!("unknown dtype tag {other}"))),
    };
    let config_len = r.u32()? as usize;
    let config_bytes = r.take(config_len)?;
    let config: ModelConfig = serde_json::from_slice(config_bytes)
        .map_err(|e| r.fail(format!("config: {e}")))?;
    let count = r.u32()? as usize;
    // each tensor needs at least 2 + 1 + 4 + 8 bytes
    if count > r.remaining() / 15 {
        return Err(r.fail(format!("tensor count {count} exceeds payload")));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| r.fail("tensor name is not UTF-8"))?
            .to_string();
        let ndim = r.u8()?;
        if ndim == 0 || ndim > MAX_NDIM {
            return Err(r.fail(format!("tensor {name}: {ndim} dims")));
        }
        let mut shape = Vec::with_capacity(ndim as usize);
        let mut total: usize = 1;
        for _ in 0..ndim {
            let d = r.u32()? as usize;
            if d == 0 {
                return Err(r.fail(format!("tensor {name}: zero extent")));
            }
            total = total
                .checked_mul(d)
                .ok_or_else(|| r.fail(format!("tensor {name}: size overflow")))?;
            shape.push(d);
        }
        if total > r.remaining() / 8 {
            return Err(r.fail(format!("tensor {name}: {total} values exceed payload")));
        }
        let raw = r.take(total * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("checkpoint tensor {name}")));
        }
        tensors.push((name, shape, data));
    }
    if r.remaining() != 0 {
        return Err(r.fail(format!("{} trailing bytes", r.remaining())));
    }
    Ok(Checkpoint {
        config,
        dtype,
        tensors,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Format { location, message } => Error::Format {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}
