//! Container format shared by head assets, checkpoints and tensor dumps.
//!
//! Layout:
//!
//! ```text
//! magic     8 bytes   b"FWARCH\0\0"
//! hlen      u32 LE    length of the JSON header in bytes
//! header    hlen      {"version":1,"kind":..,"meta":{..},"entries":[{"name","dtype","shape"}]}
//! blocks              one little-endian block per entry, in header order
//! ```
//!
//! `dtype` is one of `f32`, `u32`, `i32`; every element is 4 bytes.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"FWARCH\0\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    U32(Vec<u32>),
    I32(Vec<i32>),
}

impl ArrayData {
    fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::U32(v) => v.len(),
            ArrayData::I32(v) => v.len(),
        }
    }

    fn dtype(&self) -> &'static str {
        match self {
            ArrayData::F32(_) => "f32",
            ArrayData::U32(_) => "u32",
            ArrayData::I32(_) => "i32",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

#[derive(Serialize, Deserialize)]
struct EntryHeader {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    kind: String,
    meta: serde_json::Value,
    entries: Vec<EntryHeader>,
}

/// An ordered set of named arrays plus free-form JSON metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub kind: String,
    pub meta: serde_json::Value,
    pub entries: Vec<Entry>,
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format {
        path: "<stream>".into(),
        detail: detail.into(),
    }
}

impl Archive {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: ArrayData) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(bad(format!("entry {name}: shape {shape:?} does not match {} elements", data.len())));
        }
        if self.get(&name).is_some() {
            return Err(bad(format!("duplicate entry {name}")));
        }
        self.entries.push(Entry { name, shape, data });
        Ok(())
    }

    pub fn push_f32(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
        self.push(name, shape, ArrayData::F32(data))
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn require(&self, name: &str) -> Result<&Entry> {
        self.get(name).ok_or_else(|| bad(format!("missing entry {name}")))
    }

    pub fn f32(&self, name: &str) -> Result<(&[usize], &[f32])> {
        let e = self.require(name)?;
        match &e.data {
            ArrayData::F32(v) => Ok((&e.shape, v)),
            other => Err(bad(format!("entry {name} is {}, expected f32", other.dtype()))),
        }
    }

    pub fn u32(&self, name: &str) -> Result<(&[usize], &[u32])> {
        let e = self.require(name)?;
        match &e.data {
            ArrayData::U32(v) => Ok((&e.shape, v)),
            other => Err(bad(format!("entry {name} is {}, expected u32", other.dtype()))),
        }
    }

    pub fn i32(&self, name: &str) -> Result<(&[usize], &[i32])> {
        let e = self.require(name)?;
        match &e.data {
            ArrayData::I32(v) => Ok((&e.shape, v)),
            other => Err(bad(format!("entry {name} is {}, expected i32", other.dtype()))),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            version: VERSION,
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| EntryHeader {
                    name: e.name.clone(),
                    dtype: e.data.dtype().into(),
                    shape: e.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        for e in &self.entries {
            let mut buf = Vec::with_capacity(e.data.len() * 4);
            match &e.data {
                ArrayData::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
                ArrayData::U32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
                ArrayData::I32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        if header.version != VERSION {
            return Err(bad(format!("unsupported version {}", header.version)));
        }
        let mut entries = Vec::with_capacity(header.entries.len());
        for eh in header.entries {
            let n: usize = eh.shape.iter().product();
            let mut raw = vec![0u8; n * 4];
            r.read_exact(&mut raw)?;
            let words = raw.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]);
            let data = match eh.dtype.as_str() {
                "f32" => ArrayData::F32(words.map(f32::from_le_bytes).collect()),
                "u32" => ArrayData::U32(words.map(u32::from_le_bytes).collect()),
                "i32" => ArrayData::I32(words.map(i32::from_le_bytes).collect()),
                other => return Err(bad(format!("entry {}: unknown dtype {other}", eh.name))),
            };
            entries.push(Entry {
                name: eh.name,
                shape: eh.shape,
                data,
            });
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(bad("trailing bytes after last block"));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(bytes.as_slice()).map_err(|e| match e {
            Error::Format { detail, .. } => Error::Format {
                path: path.to_owned(),
                detail,
            },
            other => other,
        })
    }

    /// Check the archive kind, e.g. `"head-asset"` or `"checkpoint"`.
    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(bad(format!("archive kind {} where {kind} was expected", self.kind)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut a = Archive::new("test", serde_json::json!({"n": 3}));
        a.push_f32("x", vec![2, 2], vec![1.0, -2.5, f32::MIN_POSITIVE, 4.0]).unwrap();
        a.push("idx", vec![3], ArrayData::U32(vec![0, 7, u32::MAX])).unwrap();
        a.push("par", vec![1], ArrayData::I32(vec![-1])).unwrap();
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(Archive::read_from(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn rejects_corruption() {
        let mut a = Archive::new("test", serde_json::Value::Null);
        a.push_f32("x", vec![2], vec![1.0, 2.0]).unwrap();
        assert!(a.push_f32("y", vec![3], vec![1.0]).is_err());
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        assert!(Archive::read_from(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(Archive::read_from(extra.as_slice()).is_err());
        buf[0] = b'X';
        assert!(Archive::read_from(buf.as_slice()).is_err());
    }
}
