//! The binary named-tensor container.
//!
//! ```text
//! magic      8 bytes   "LEAFCKPT"
//! version    u32 LE
//! count      u32 LE
//! entry * count:
//!   name_len u32 LE, name (UTF-8)
//!   dtype    u8        (0 = f32)
//!   ndim     u32 LE, dims u64 LE * ndim
//!   values   f32 LE * prod(dims)
//! checksum   u64 LE    first 8 bytes of SHA-256 over everything above
//! ```

use std::collections::HashSet;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LEAFCKPT";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl Entry {
    pub fn new(name: impl Into<String>, shape: &[usize], values: Vec<f32>) -> Result<Self> {
        let name = name.into();
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::shape(
                "checkpoint entry",
                format!("`{name}` has {} values for shape {shape:?}", values.len()),
            ));
        }
        Ok(Entry {
            name,
            shape: shape.to_vec(),
            values,
        })
    }
}

/// Ordered, uniquely named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub entries: Vec<Entry>,
}

/// First 8 bytes of SHA-256, read little-endian.
pub fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corruption(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: Entry) -> Result<()> {
        if self.get(&entry.name).is_some() {
            return Err(Error::Format(format!("duplicate checkpoint entry `{}`", entry.name)));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self
            .entries
            .iter()
            .map(|e| 4 + e.name.len() + 1 + 4 + 8 * e.shape.len() + 4 * e.values.len())
            .sum();
        let mut out = Vec::with_capacity(16 + payload + 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(DTYPE_F32);
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &e.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    /// Parses and verifies a container. Any damage, including truncation or
    /// trailing bytes, is reported as [`Error::Corruption`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 + 8 {
            return Err(Error::Corruption(format!("file is only {} bytes", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Corruption("bad magic bytes".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        let actual = checksum(body);
        if stored != actual {
            return Err(Error::Corruption(format!(
                "checksum mismatch: stored {stored:016x}, computed {actual:016x}"
            )));
        }

        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Corruption(format!("unsupported format version {version}")));
        }
        let count = r.u32("entry count")? as usize;
        let mut entries = Vec::with_capacity(count.min(4096));
        let mut seen = HashSet::new();
        for i in 0..count {
            let len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| Error::Corruption(format!("entry {i}: name is not UTF-8")))?
                .to_string();
            let dtype = r.take(1, "dtype")?[0];
            if dtype != DTYPE_F32 {
                return Err(Error::Corruption(format!("`{name}`: unknown dtype tag {dtype}")));
            }
            let ndim = r.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(ndim.min(16));
            for _ in 0..ndim {
                shape.push(usize::try_from(r.u64("dimension")?).map_err(|_| Error::Corruption("dimension overflow".into()))?);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::Corruption(format!("`{name}`: shape {shape:?} overflows")))?;
            let raw = r.take(numel, "values")?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if !seen.insert(name.clone()) {
                return Err(Error::Corruption(format!("duplicate entry `{name}`")));
            }
            entries.push(Entry { name, shape, values });
        }
        if r.pos != body.len() {
            return Err(Error::Corruption(format!(
                "{} unexpected bytes after the last entry",
                body.len() - r.pos
            )));
        }
        Ok(Checkpoint { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Writes through a temporary file in the same directory, then renames it
    /// into place.
    pub fn write(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, &self.to_bytes())
    }
}
