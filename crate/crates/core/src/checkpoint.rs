//! Self-describing model checkpoints.
//!
//! Layout (all integers little-endian):
//! - 8-byte magic `DPTRCKPT`
//! - u32 format version (currently 1)
//! - u32 config length, then that many bytes of `[model]` key=value text
//! - u32 record count, then per record:
//!   name (u32 length + UTF-8), rank (u32), dims (u64 each), values (f64 each)
//!
//! Records must match the canonical parameter layout of the embedded config in
//! name, order, and shape; anything else is rejected, so a loaded checkpoint
//! is always structurally valid.

use std::path::Path;
use std::sync::Arc;

use crate::config::{model_from_kv, model_to_kv};
use crate::error::{io_error, Error, Result};
use crate::model::ModelParams;
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 8] = b"DPTRCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Serialize parameters with their config into the container format.
pub fn encode(params: &ModelParams) -> Vec<u8> {
    let config_text = model_to_kv(&params.config);
    let tensors = params.to_tensors();
    let template = params.config.param_template();

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config_text.len() as u32).to_le_bytes());
    out.extend_from_slice(config_text.as_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (spec, tensor) in template.iter().zip(&tensors) {
        out.extend_from_slice(&(spec.name.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.name.as_bytes());
        out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &dim in tensor.shape() {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &x in tensor.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Parse(format!("checkpoint truncated reading {what}")))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32le(&mut self, what: &str) -> Result<u32> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64le(&mut self, what: &str) -> Result<u64> {
        let b = self.bytes(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8-byte slice")))
    }

    fn str(&mut self, n: usize, what: &str) -> Result<&'a str> {
        let b = self.bytes(n, what)?;
        std::str::from_utf8(b).map_err(|_| Error::Parse(format!("checkpoint {what} is not UTF-8")))
    }
}

/// Parse the container format and rebuild parameters. Every structural claim
/// in the file is validated against the embedded config before any large
/// allocation happens.
pub fn decode(buf: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { buf, pos: 0 };
    if r.bytes(8, "magic")? != MAGIC {
        return Err(Error::Parse("not a checkpoint: bad magic".to_string()));
    }
    let version = r.u32le("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported checkpoint format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let config_len = r.u32le("config length")? as usize;
    let config = model_from_kv(r.str(config_len, "config text")?)?;
    let template = config.param_template();

    let count = r.u32le("record count")? as usize;
    if count != template.len() {
        return Err(Error::Parse(format!(
            "checkpoint has {count} records, config implies {}",
            template.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for spec in &template {
        let name_len = r.u32le("record name length")? as usize;
        let name = r.str(name_len, "record name")?;
        if name != spec.name {
            return Err(Error::Parse(format!(
                "checkpoint record `{name}` where `{}` was expected",
                spec.name
            )));
        }
        let rank = r.u32le("record rank")? as usize;
        if rank != spec.shape.len() {
            return Err(Error::Parse(format!("record `{name}` has rank {rank}")));
        }
        let mut len = 1usize;
        for &want in &spec.shape {
            let dim = r.u64le("record dim")?;
            if dim != want as u64 {
                return Err(Error::Parse(format!(
                    "record `{name}` dimension {dim} does not fit the config"
                )));
            }
            len = len
                .checked_mul(want)
                .ok_or_else(|| Error::Parse(format!("record `{name}` overflows")))?;
        }
        let raw = r.bytes(len * 8, "record values")?;
        let mut data = Vec::with_capacity(len);
        for chunk in raw.chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")));
        }
        tensors.push(Arc::new(Tensor::from_vec(&spec.shape, data)?));
    }
    if r.pos != buf.len() {
        return Err(Error::Parse(format!(
            "checkpoint has {} trailing bytes",
            buf.len() - r.pos
        )));
    }
    ModelParams::from_tensors(config, tensors)
}

pub fn save(path: &Path, params: &ModelParams) -> Result<()> {
    std::fs::write(path, encode(params)).map_err(|e| io_error(path, &e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let buf = std::fs::read(path).map_err(|e| io_error(path, &e))?;
    decode(&buf)
}
