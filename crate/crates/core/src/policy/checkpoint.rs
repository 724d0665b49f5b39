//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic          4 bytes  "JNCK"
//! version        u16      currently 1
//! config_hash    u16 length + UTF-8 bytes
//! seed lineage   u16 count + count * u64
//! networks       4 times, in order high, low, value_high, value_low:
//!                  u16 layer-size count n, n * u32 sizes,
//!                  then one f64 per parameter (count implied by sizes)
//! checksum       32 bytes, SHA-256 of everything before it
//! ```

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nn::Mlp;

use super::PolicyParams;

pub const MAGIC: &[u8; 4] = b"JNCK";
pub const VERSION: u16 = 1;
const MAX_LAYERS: usize = 16;
const MAX_WIDTH: usize = 4096;
const MAX_PARAMS: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    /// Seeds that produced these weights, oldest first.
    pub seed_lineage: Vec<u64>,
    pub params: PolicyParams,
}

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("checksum mismatch")]
    Checksum,
    #[error("invalid field: {0}")]
    Invalid(&'static str),
    #[error("{0} trailing bytes after checkpoint")]
    Trailing(usize),
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let hash = ck.config_hash.as_bytes();
    let hash = &hash[..hash.len().min(u16::MAX as usize)];
    out.extend_from_slice(&(hash.len() as u16).to_le_bytes());
    out.extend_from_slice(hash);
    let seeds = &ck.seed_lineage[..ck.seed_lineage.len().min(u16::MAX as usize)];
    out.extend_from_slice(&(seeds.len() as u16).to_le_bytes());
    for s in seeds {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for net in ck.params.nets() {
        out.extend_from_slice(&(net.sizes().len() as u16).to_le_bytes());
        for &s in net.sizes() {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for p in &net.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    let sum = Sha256::digest(&out);
    out.extend_from_slice(&sum);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.at < n {
            return Err(CheckpointError::Truncated(self.buf.len()));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.at
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 4 + 2 + 32 {
        return Err(CheckpointError::Truncated(bytes.len()));
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    let mut r = Reader { buf: body, at: 4 };
    let version = r.u16()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    if Sha256::digest(body).as_slice() != sum {
        return Err(CheckpointError::Checksum);
    }
    let n = r.u16()? as usize;
    let config_hash = std::str::from_utf8(r.take(n)?).map_err(|_| CheckpointError::Invalid("config hash is not UTF-8"))?.to_string();
    let n = r.u16()? as usize;
    if r.remaining() < n * 8 {
        return Err(CheckpointError::Truncated(bytes.len()));
    }
    let seed_lineage = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
    let mut nets = Vec::with_capacity(4);
    for _ in 0..4 {
        let layers = r.u16()? as usize;
        if !(2..=MAX_LAYERS).contains(&layers) {
            return Err(CheckpointError::Invalid("layer count"));
        }
        let mut sizes = Vec::with_capacity(layers);
        for _ in 0..layers {
            let s = r.u32()? as usize;
            if s == 0 || s > MAX_WIDTH {
                return Err(CheckpointError::Invalid("layer width"));
            }
            sizes.push(s);
        }
        let count = Mlp::param_count(&sizes);
        if count > MAX_PARAMS {
            return Err(CheckpointError::Invalid("parameter count"));
        }
        if r.remaining() < count * 8 {
            return Err(CheckpointError::Truncated(bytes.len()));
        }
        let raw = r.take(count * 8)?;
        let params: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(CheckpointError::Invalid("non-finite weight"));
        }
        nets.push(Mlp::from_params(&sizes, params).expect("count matches sizes"));
    }
    if r.remaining() != 0 {
        return Err(CheckpointError::Trailing(r.remaining()));
    }
    let mut it = nets.into_iter();
    let mut next = || it.next().expect("four networks");
    let params = PolicyParams { high: next(), low: next(), value_high: next(), value_low: next() };
    if params.high.output_len() != 2
        || params.low.output_len() != 4
        || params.value_high.output_len() != 1
        || params.value_low.output_len() != 1
        || params.high.input_len() != params.value_high.input_len()
        || params.low.input_len() != params.value_low.input_len()
    {
        return Err(CheckpointError::Invalid("network shapes"));
    }
    Ok(Checkpoint { config_hash, seed_lineage, params })
}

/// Hex SHA-256 of an encoded checkpoint, for reproducibility checks.
pub fn fingerprint(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
