//! Binary checkpoint container.
//!
//! ```text
//! magic "NUQCKPT\0" | version u32 | header_len u64 | header (key=value lines)
//! | blob_count u64 | blobs...
//! blob: name_len u32 | name | dtype u8 (0 = f32, 1 = f64) | rank u32
//!       | dims u64 × rank | little-endian values
//! ```
//!
//! Blob names are namespaced (`model/`, `optim/`, `disc/`, `disc_optim/`).

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use candle_core::{DType, Device, Tensor};

use crate::error::{NuqError, Result};
use crate::kv;

const MAGIC: &[u8; 8] = b"NUQCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub header: Vec<(String, String)>,
    pub blobs: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_header(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.header.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.header.push((key.to_string(), value)),
        }
    }

    /// Blobs under `namespace/`, with the prefix stripped.
    pub fn namespace(&self, namespace: &str) -> BTreeMap<String, Tensor> {
        let prefix = format!("{namespace}/");
        self.blobs
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&prefix).map(|rest| (rest.to_string(), v.clone())))
            .collect()
    }

    pub fn has_namespace(&self, namespace: &str) -> bool {
        let prefix = format!("{namespace}/");
        self.blobs.keys().any(|k| k.starts_with(&prefix))
    }

    pub fn insert_namespace(&mut self, namespace: &str, blobs: BTreeMap<String, Tensor>) {
        for (k, v) in blobs {
            self.blobs.insert(format!("{namespace}/{k}"), v);
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let header: String = self.header.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.blobs.len() as u64).to_le_bytes());
        for (name, t) in &self.blobs {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let flat = t.flatten_all()?;
            match t.dtype() {
                DType::F32 => out.push(0),
                DType::F64 => out.push(1),
                other => return Err(NuqError::Shape(format!("{name}: unsupported dtype {other:?}"))),
            }
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.dims() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match t.dtype() {
                DType::F32 => flat.to_vec1::<f32>()?.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                _ => flat.to_vec1::<f64>()?.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            }
        }
        Ok(out)
    }

    /// Writes to a temporary sibling and renames, so a crash never leaves a
    /// truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| NuqError::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| NuqError::io(&tmp, e))?;
        f.write_all(&self.to_bytes()?).map_err(|e| NuqError::io(&tmp, e))?;
        f.sync_all().map_err(|e| NuqError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| NuqError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| NuqError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| NuqError::format(path, reason))
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let hlen = r.u64()? as usize;
        let header_text = std::str::from_utf8(r.take(hlen)?).map_err(|_| "header is not UTF-8")?;
        let header = kv::parse_lines(header_text, Path::new("<checkpoint header>")).map_err(|e| e.to_string())?;
        let count = r.u64()?;
        let mut blobs = BTreeMap::new();
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?).map_err(|_| "blob name is not UTF-8")?.to_string();
            let dtype = r.take(1)?[0];
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
            let n: usize = dims.iter().product();
            let t = match dtype {
                0 => {
                    let raw = r.take(n * 4)?;
                    let v: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                    Tensor::from_vec(v, dims.as_slice(), &Device::Cpu)
                }
                1 => {
                    let raw = r.take(n * 8)?;
                    let v: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                    Tensor::from_vec(v, dims.as_slice(), &Device::Cpu)
                }
                other => return Err(format!("blob {name}: unknown dtype tag {other}")),
            }
            .map_err(|e| e.to_string())?;
            blobs.insert(name, t);
        }
        if r.pos != bytes.len() {
            return Err("trailing bytes after last blob".into());
        }
        Ok(Checkpoint { header, blobs })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("unexpected end of file")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Fails with every mismatching `key: stored -> requested` pair.
pub fn check_compatible(header: &[(String, String)], expected: &[(&str, String)]) -> Result<()> {
    let mut diffs = Vec::new();
    for (key, want) in expected {
        match header.iter().find(|(k, _)| k == key) {
            Some((_, have)) if have == want => {}
            Some((_, have)) => diffs.push(format!("{key}: checkpoint has {have}, requested {want}")),
            None => diffs.push(format!("{key}: missing from checkpoint, requested {want}")),
        }
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(NuqError::Incompatible(diffs))
    }
}
