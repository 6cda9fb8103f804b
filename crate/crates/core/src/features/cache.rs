//! On-disk feature cache.
//!
//! `features.bin` starts with the magic `UTFC` and a u32 version, followed by
//! one record per (clip, kind): u32 id length, UTF-8 clip id, u8 kind code,
//! u32 frames, u32 bands, then `frames * bands` row-major f32 values. All
//! integers and floats are little-endian. `index.json` lists the records with
//! their byte offsets and the extraction parameters.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::extract::{FeatureParams, FeatureTensor};
use super::{FeatureError, FeatureKind};

pub const CACHE_FILE: &str = "features.bin";
pub const INDEX_FILE: &str = "index.json";
const MAGIC: &[u8; 4] = b"UTFC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub clip_id: String,
    pub kind: FeatureKind,
    pub frames: usize,
    pub bands: usize,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheIndex {
    pub version: u32,
    pub params: FeatureParams,
    pub records: Vec<CacheRecord>,
}

/// Loaded cache, addressable by clip id and kind.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    pub params: FeatureParams,
    entries: HashMap<(String, FeatureKind), FeatureTensor>,
}

impl FeatureCache {
    pub fn get(&self, clip_id: &str, kind: FeatureKind) -> Option<&FeatureTensor> {
        self.entries.get(&(clip_id.to_string(), kind))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Writes `entries` into `dir`, replacing any existing cache.
pub fn write_feature_cache(
    dir: impl AsRef<Path>,
    params: &FeatureParams,
    entries: &[(String, FeatureTensor)],
) -> Result<CacheIndex, FeatureError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut bin = Vec::new();
    bin.extend_from_slice(MAGIC);
    bin.extend_from_slice(&VERSION.to_le_bytes());
    let mut records = Vec::with_capacity(entries.len());
    for (clip_id, tensor) in entries {
        let offset = bin.len() as u64;
        bin.extend_from_slice(&(clip_id.len() as u32).to_le_bytes());
        bin.extend_from_slice(clip_id.as_bytes());
        bin.push(tensor.kind.code());
        bin.extend_from_slice(&(tensor.frames() as u32).to_le_bytes());
        bin.extend_from_slice(&(tensor.bands() as u32).to_le_bytes());
        for &v in tensor.values.iter() {
            bin.extend_from_slice(&(v as f32).to_le_bytes());
        }
        records.push(CacheRecord {
            clip_id: clip_id.clone(),
            kind: tensor.kind,
            frames: tensor.frames(),
            bands: tensor.bands(),
            offset,
        });
    }
    let index = CacheIndex {
        version: VERSION,
        params: *params,
        records,
    };
    std::fs::write(dir.join(CACHE_FILE), &bin)?;
    let mut json = serde_json::to_vec_pretty(&index).map_err(|e| FeatureError::Cache(e.to_string()))?;
    json.write_all(b"\n")?;
    std::fs::write(dir.join(INDEX_FILE), json)?;
    Ok(index)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FeatureError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| FeatureError::Cache(format!("truncated record at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, FeatureError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_feature_cache(dir: impl AsRef<Path>) -> Result<FeatureCache, FeatureError> {
    let dir = dir.as_ref();
    let index: CacheIndex = serde_json::from_slice(&std::fs::read(dir.join(INDEX_FILE))?)
        .map_err(|e| FeatureError::Cache(format!("{INDEX_FILE}: {e}")))?;
    let bytes = std::fs::read(dir.join(CACHE_FILE))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(FeatureError::Cache("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION || index.version != VERSION {
        return Err(FeatureError::Cache(format!("unsupported version {version}")));
    }
    let mut entries = HashMap::new();
    for record in &index.records {
        if cur.pos as u64 != record.offset {
            return Err(FeatureError::Cache(format!(
                "record {} expected at byte {}, found {}",
                record.clip_id, record.offset, cur.pos
            )));
        }
        let id_len = cur.u32()? as usize;
        let clip_id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|_| FeatureError::Cache("clip id is not UTF-8".into()))?
            .to_string();
        let kind = FeatureKind::from_code(cur.take(1)?[0])
            .ok_or_else(|| FeatureError::Cache(format!("unknown kind code for {clip_id}")))?;
        let frames = cur.u32()? as usize;
        let bands = cur.u32()? as usize;
        if clip_id != record.clip_id || kind != record.kind || frames != record.frames || bands != record.bands {
            return Err(FeatureError::Cache(format!("record {} disagrees with the index", record.clip_id)));
        }
        let raw = cur.take(frames * bands * 4)?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let values = Array2::from_shape_vec((frames, bands), values).map_err(|e| FeatureError::Cache(e.to_string()))?;
        entries.insert((clip_id, kind), FeatureTensor { values, kind });
    }
    if cur.pos != bytes.len() {
        return Err(FeatureError::Cache("trailing bytes after the last record".into()));
    }
    Ok(FeatureCache {
        params: index.params,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let tensor = FeatureTensor {
            values: Array2::from_shape_fn((3, 4), |(t, f)| t as f64 * 10.0 - f as f64 * 0.5),
            kind: FeatureKind::HpssP,
        };
        let params = FeatureParams::default();
        write_feature_cache(dir.path(), &params, &[("clip a".into(), tensor.clone())]).unwrap();
        let cache = read_feature_cache(dir.path()).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(cache.params, params);
        assert_eq!(cache.get("clip a", FeatureKind::HpssP), Some(&tensor));
        assert!(cache.get("clip a", FeatureKind::LogMel).is_none());

        // header bytes: magic, version, id length
        let bin = std::fs::read(dir.path().join(CACHE_FILE)).unwrap();
        assert_eq!(&bin[..4], b"UTFC");
        assert_eq!(u32::from_le_bytes(bin[8..12].try_into().unwrap()), 6);
        assert_eq!(bin.len(), 8 + 4 + 6 + 1 + 8 + 12 * 4);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let tensor = FeatureTensor {
            values: Array2::zeros((2, 2)),
            kind: FeatureKind::LogMel,
        };
        write_feature_cache(dir.path(), &FeatureParams::default(), &[("x".into(), tensor)]).unwrap();
        let path = dir.path().join(CACHE_FILE);
        let mut bin = std::fs::read(&path).unwrap();
        bin.truncate(bin.len() - 3);
        std::fs::write(&path, bin).unwrap();
        assert!(matches!(read_feature_cache(dir.path()), Err(FeatureError::Cache(_))));
    }
}
