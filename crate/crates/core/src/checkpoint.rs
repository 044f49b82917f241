//! Binary checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SRDL"              magic
//! u32                 format version (1)
//! u32 + bytes         JSON header: model spec, stage, epoch, RNG state, init info
//! u32                 tensor count
//! per tensor:
//!   u32 + bytes       UTF-8 name
//!   u32               rank
//!   u32 × rank        extents
//!   f32 × volume      values
//! u32                 CRC-32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InitInfo, ModelSpec, ParameterSet};
use crate::rng::RngState;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SRDL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// End of the first self-referenced stage (the half-trained model).
    Stage1Final,
    Stage2Final,
    VanillaFinal,
    Teacher,
    KdFinal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: ParameterSet<f32>,
    pub stage: Stage,
    /// Epochs completed when the checkpoint was taken.
    pub epoch: usize,
    pub rng: RngState,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    stage: Stage,
    epoch: usize,
    rng: RngState,
    init: InitInfo,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&Header {
            spec: self.spec.clone(),
            stage: self.stage,
            epoch: self.epoch,
            rng: self.rng,
            init: self.params.init.clone(),
        })
        .expect("checkpoint header serializes");
        put_bytes(&mut out, &header);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            put_bytes(&mut out, name.as_bytes());
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Integrity(format!("checkpoint is only {} bytes", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!("bad checkpoint magic {:02x?}", &bytes[..4])));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version > FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        if version == 0 {
            return Err(Error::Format("checkpoint version 0 is invalid".into()));
        }
        if bytes.len() < 12 {
            return Err(Error::Integrity("checkpoint truncated before checksum".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Integrity("checkpoint checksum mismatch (truncated or corrupted)".into()));
        }

        let mut r = Reader::new(&body[8..]);
        let header: Header = serde_json::from_slice(r.bytes()?)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let name = String::from_utf8(r.bytes()?.to_vec())
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Integrity("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::Integrity(e.to_string()))?;
            entries.push((name, t));
        }
        if !r.is_done() {
            return Err(Error::Integrity("trailing bytes after tensors".into()));
        }
        let params = ParameterSet::new(entries, header.init)?;
        params.check_against(&header.spec)?;
        Ok(Self {
            spec: header.spec,
            params,
            stage: header.stage,
            epoch: header.epoch,
            rng: header.rng,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

/// Bounds-checked little-endian cursor.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Integrity(format!(
                "unexpected end of data: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
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

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub(crate) fn is_done(&self) -> bool {
        self.pos == self.buf.len()
    }
}
