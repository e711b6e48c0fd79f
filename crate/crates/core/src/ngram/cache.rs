//! Versioned binary model cache. Bit-exact: doubles are stored raw.
//!
//! Layout (little endian): magic `DSKNLM01`, u32 order, u8 lowercase,
//! u32 vocab size, u64 min_count, each ordinary token (u32 len + UTF-8),
//! u64 count per id, u32 discount
//! count then `d1 d2 d3plus` as f64, u32 warning count then strings, u32 meta
//! count then strings, then per order: u64 entry count, and per entry the key
//! ids (u32 each), a flag byte (bit 0: log-prob present, bit 1: backoff
//! present) and the present values as f64.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::counts::GramTable;
use super::kn::{validate, Discounts, Entry, KnModel};
use crate::corpus::{Vocabulary, NUM_SPECIALS};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DSKNLM01";

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated model cache at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("invalid UTF-8 in model cache".into()))
    }
}

pub fn to_bytes(model: &KnModel) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    w.u32(model.order as u32);
    w.u8(model.vocab.lowercase() as u8);
    w.u32(model.vocab.size() as u32);
    w.u64(model.vocab.min_count());
    for t in &model.vocab.tokens()[NUM_SPECIALS..] {
        w.str(t);
    }
    for id in 0..model.vocab.size() as u32 {
        w.u64(model.vocab.count(id));
    }
    w.u32(model.discounts.len() as u32);
    for d in &model.discounts {
        w.f64(d.d1);
        w.f64(d.d2);
        w.f64(d.d3plus);
    }
    for list in [&model.warnings, &model.meta] {
        w.u32(list.len() as u32);
        for s in list {
            w.str(s);
        }
    }
    for table in &model.tables {
        w.u64(table.len() as u64);
        for (key, e) in table.iter() {
            for &id in key {
                w.u32(id);
            }
            w.u8(e.log_prob.is_some() as u8 | (e.log_backoff.is_some() as u8) << 1);
            if let Some(p) = e.log_prob {
                w.f64(p);
            }
            if let Some(b) = e.log_backoff {
                w.f64(b);
            }
        }
    }
    w.0
}

pub fn from_bytes(buf: &[u8]) -> Result<KnModel> {
    if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("not a domain-sieve model cache (bad magic)".into()));
    }
    let mut r = Reader {
        buf,
        pos: MAGIC.len(),
    };
    let order = r.u32()? as usize;
    if order == 0 {
        return Err(Error::Format("model order 0".into()));
    }
    let lowercase = r.u8()? != 0;
    let size = r.u32()? as usize;
    if size < NUM_SPECIALS {
        return Err(Error::Format("vocabulary smaller than specials".into()));
    }
    let min_count = r.u64()?;
    let tokens = (NUM_SPECIALS..size).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let counts = (0..size).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let vocab = Arc::new(Vocabulary::from_parts(tokens, counts, min_count, lowercase)?);
    let nd = r.u32()? as usize;
    let discounts = (0..nd)
        .map(|_| {
            Ok(Discounts {
                d1: r.f64()?,
                d2: r.f64()?,
                d3plus: r.f64()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut lists = Vec::new();
    for _ in 0..2 {
        let n = r.u32()? as usize;
        lists.push((0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?);
    }
    let meta = lists.pop().unwrap();
    let warnings = lists.pop().unwrap();
    let mut tables = Vec::with_capacity(order);
    for o in 1..=order {
        let n = r.u64()? as usize;
        let mut keys = Vec::with_capacity(n.min(1 << 24) * o);
        let mut entries = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            for _ in 0..o {
                keys.push(r.u32()?);
            }
            let flags = r.u8()?;
            let log_prob = if flags & 1 != 0 { Some(r.f64()?) } else { None };
            let log_backoff = if flags & 2 != 0 { Some(r.f64()?) } else { None };
            entries.push(Entry {
                log_prob,
                log_backoff,
            });
        }
        let table = GramTable::from_sorted(o, keys, entries);
        if (1..table.len()).any(|i| table.key(i - 1) >= table.key(i)) {
            return Err(Error::Format(format!("{o}-gram table not sorted")));
        }
        tables.push(table);
    }
    if r.pos != buf.len() {
        return Err(Error::Format("trailing bytes in model cache".into()));
    }
    let model = KnModel {
        order,
        vocab,
        discounts,
        tables,
        warnings,
        meta,
    };
    validate(&model)?;
    Ok(model)
}

pub fn save(model: &KnModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

/// Loads either a binary cache or an ARPA file, sniffing the magic bytes.
pub fn load(path: impl AsRef<Path>) -> Result<KnModel> {
    let path = path.as_ref();
    let buf = fs::read(path)?;
    if buf.starts_with(MAGIC) {
        from_bytes(&buf)
    } else {
        let text = String::from_utf8(buf)
            .map_err(|_| Error::Format(format!("{}: neither model cache nor ARPA text", path.display())))?;
        super::arpa::parse_arpa(&text, &path.display().to_string())
    }
}
