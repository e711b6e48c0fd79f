//! Parameter checkpoints.
//!
//! Layout (little endian): magic `DSPARAM1`, u32 tensor count, then per
//! tensor: u32 name length, UTF-8 name, u32 rank, u64 per dimension, and
//! the row-major values as raw f64.

use std::fs;
use std::path::Path;

use super::graph::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DSPARAM1";

pub fn to_bytes(params: &ParamStore) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(buf: &[u8]) -> Result<ParamStore> {
    if !buf.starts_with(MAGIC) {
        return Err(Error::Format("not a parameter checkpoint (bad magic)".into()));
    }
    let mut pos = MAGIC.len();
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= buf.len())
            .ok_or_else(|| Error::Format(format!("truncated checkpoint at byte {pos}")))?;
        let s = &buf[pos..end];
        pos = end;
        Ok(s)
    };
    let u32_of = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    let count = u32_of(take(4)?);
    let mut params = ParamStore::new();
    for _ in 0..count {
        let n = u32_of(take(4)?) as usize;
        let name = String::from_utf8(take(n)?.to_vec())
            .map_err(|_| Error::Format("invalid UTF-8 parameter name".into()))?;
        let rank = u32_of(take(4)?) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
        }
        let len: usize = shape.iter().product();
        let raw = take(len.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.add(name, Tensor::new(shape, data)?);
    }
    if take(1).is_ok() {
        return Err(Error::Format("trailing bytes in checkpoint".into()));
    }
    Ok(params)
}

pub fn save(params: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(params))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ParamStore> {
    from_bytes(&fs::read(path)?)
}
