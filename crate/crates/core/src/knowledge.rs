//! Per-sample softened class probabilities, keyed by sample id.
//!
//! File layout (little-endian):
//!
//! ```text
//! "SRKN"            magic
//! u32               version (1)
//! u64               n
//! u32               C
//! f64               temperature
//! n × (u64 id, C × f32 probability)
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Reader;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SRKN";
pub const FORMAT_VERSION: u32 = 1;

/// Row sums must be within this of 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnowledgeSource {
    SelfStage1,
    Teacher,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeStore {
    classes: usize,
    temperature: f64,
    ids: Vec<u64>,
    probs: Vec<f32>,
    index: HashMap<u64, usize>,
    /// Not persisted; `None` after loading from disk.
    pub source: Option<KnowledgeSource>,
}

impl KnowledgeStore {
    pub fn new(classes: usize, temperature: f64, source: Option<KnowledgeSource>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::contract(format!("knowledge needs at least 2 classes, got {classes}")));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::contract(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self {
            classes,
            temperature,
            ids: Vec::new(),
            probs: Vec::new(),
            index: HashMap::new(),
            source,
        })
    }

    pub fn push(&mut self, id: u64, row: &[f32]) -> Result<()> {
        if row.len() != self.classes {
            return Err(Error::shape(
                "knowledge",
                format!("row of {} values for {} classes", row.len(), self.classes),
            ));
        }
        if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::contract(format!("row for sample {id} has invalid probabilities")));
        }
        let sum: f64 = row.iter().map(|&p| p as f64).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::contract(format!("row for sample {id} sums to {sum}")));
        }
        if self.index.insert(id, self.ids.len()).is_some() {
            return Err(Error::contract(format!("sample id {id} appears twice")));
        }
        self.ids.push(id);
        self.probs.extend_from_slice(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn row(&self, id: u64) -> Option<&[f32]> {
        self.index
            .get(&id)
            .map(|&i| &self.probs[i * self.classes..(i + 1) * self.classes])
    }

    /// Checks that the store has exactly one row per id in `ids`.
    pub fn check_covers(&self, ids: &[u64]) -> Result<()> {
        if ids.len() != self.len() {
            return Err(Error::contract(format!(
                "knowledge has {} rows for {} samples",
                self.len(),
                ids.len()
            )));
        }
        if let Some(id) = ids.iter().find(|id| !self.index.contains_key(id)) {
            return Err(Error::contract(format!("no knowledge row for sample {id}")));
        }
        Ok(())
    }

    /// Row-major `ids.len() × C` reference block for a batch.
    pub fn gather(&self, ids: &[u64]) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(ids.len() * self.classes);
        for &id in ids {
            let row = self
                .row(id)
                .ok_or_else(|| Error::contract(format!("no knowledge row for sample {id}")))?;
            out.extend_from_slice(row);
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + self.len() * (8 + 4 * self.classes));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.classes as u32).to_le_bytes());
        out.extend_from_slice(&self.temperature.to_le_bytes());
        for (i, id) in self.ids.iter().enumerate() {
            out.extend_from_slice(&id.to_le_bytes());
            for p in &self.probs[i * self.classes..(i + 1) * self.classes] {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Integrity(format!("knowledge file is only {} bytes", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!("bad knowledge magic {:02x?}", &bytes[..4])));
        }
        let mut r = Reader::new(&bytes[4..]);
        let version = r.u32()?;
        if version > FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        if version == 0 {
            return Err(Error::Format("knowledge version 0 is invalid".into()));
        }
        let n = r.u64()?;
        let classes = r.u32()? as usize;
        let temperature = r.f64()?;
        let mut store = Self::new(classes, temperature, None).map_err(|e| Error::Format(e.to_string()))?;
        let mut row = vec![0f32; classes];
        for _ in 0..n {
            let id = r.u64()?;
            for p in row.iter_mut() {
                *p = r.f32()?;
            }
            store.push(id, &row).map_err(|e| Error::Integrity(e.to_string()))?;
        }
        if !r.is_done() {
            return Err(Error::Integrity("trailing bytes after knowledge rows".into()));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> KnowledgeStore {
        let mut k = KnowledgeStore::new(3, 3.0, Some(KnowledgeSource::SelfStage1)).unwrap();
        k.push(7, &[0.5, 0.25, 0.25]).unwrap();
        k.push(2, &[0.1, 0.2, 0.7]).unwrap();
        k
    }

    #[test]
    fn byte_layout() {
        let b = sample().to_bytes();
        assert_eq!(&b[..4], b"SRKN");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..16], &2u64.to_le_bytes());
        assert_eq!(&b[16..20], &3u32.to_le_bytes());
        assert_eq!(&b[20..28], &3.0f64.to_le_bytes());
        assert_eq!(&b[28..36], &7u64.to_le_bytes());
        assert_eq!(&b[36..40], &0.5f32.to_le_bytes());
        assert_eq!(b.len(), 28 + 2 * (8 + 12));
    }

    #[test]
    fn roundtrip_drops_only_the_source_tag() {
        let k = sample();
        let back = KnowledgeStore::from_bytes(&k.to_bytes()).unwrap();
        assert_eq!(back.source, None);
        assert_eq!(back.to_bytes(), k.to_bytes());
        assert_eq!(back.row(2), k.row(2));
    }

    #[test]
    fn rejects_bad_rows_and_duplicates() {
        let mut k = sample();
        assert!(k.push(7, &[0.5, 0.25, 0.25]).is_err());
        assert!(k.push(8, &[0.5, 0.25]).is_err());
        assert!(k.push(9, &[0.5, 0.5, 0.5]).is_err());
        assert!(k.push(10, &[1.5, -0.5, 0.0]).is_err());
    }

    #[test]
    fn gather_follows_ids_not_insertion_order() {
        let k = sample();
        assert_eq!(k.gather(&[2, 7]).unwrap(), vec![0.1, 0.2, 0.7, 0.5, 0.25, 0.25]);
        assert!(k.gather(&[3]).is_err());
        assert!(k.check_covers(&[7, 2]).is_ok());
        assert!(k.check_covers(&[7, 3]).is_err());
    }

    #[test]
    fn file_errors() {
        let b = sample().to_bytes();
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(KnowledgeStore::from_bytes(&bad), Err(Error::Format(_))));
        let mut newer = b.clone();
        newer[4] = 9;
        assert!(matches!(KnowledgeStore::from_bytes(&newer), Err(Error::UnsupportedVersion { .. })));
        assert!(matches!(KnowledgeStore::from_bytes(&b[..b.len() - 2]), Err(Error::Integrity(_))));
    }
}
