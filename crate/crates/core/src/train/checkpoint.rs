//! Checkpoint files: `UTCK` magic, u32 format version, u64 header length,
//! a JSON header, then little-endian f32 parameter blobs in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::IxDyn;
use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::context::NormStats;
use crate::features::{FeatureKind, FeatureParams};
use crate::nn::{Model, ModelConfig, ParameterSet, Parameterized, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"UTCK";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub feature: FeatureKind,
    pub feature_params: FeatureParams,
    pub model: ModelConfig,
    pub layer_plan: Vec<String>,
    /// Location statistics fitted on the training split, when context is used.
    pub norm: Option<NormStats>,
    pub train: TrainConfig,
    pub epoch: usize,
    pub best_metric: f64,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ParameterSet,
}

impl Checkpoint {
    pub fn capture(
        model: &mut Model,
        feature_params: FeatureParams,
        norm: Option<NormStats>,
        train: TrainConfig,
        epoch: usize,
        best_metric: f64,
    ) -> Self {
        let params = model.parameters();
        let tensors = params
            .values
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect();
        Self {
            header: CheckpointHeader {
                feature: train.feature,
                feature_params,
                model: model.config().clone(),
                layer_plan: model.config().layer_plan(),
                norm,
                train,
                epoch,
                best_metric,
                tensors,
            },
            params,
        }
    }

    /// Rebuilds the network and loads the stored parameters.
    pub fn model(&self) -> Result<Model, TrainError> {
        let mut model = Model::new(self.header.model.clone())?;
        model.load_parameters(&self.params)?;
        Ok(model)
    }
}

fn bad(path: &Path, message: impl Into<String>) -> TrainError {
    TrainError::Checkpoint {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Writes to a temporary sibling file, then renames it into place.
pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<(), TrainError> {
    let path = path.as_ref();
    let header = serde_json::to_vec(&checkpoint.header).map_err(|e| bad(path, e.to_string()))?;
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    for entry in &checkpoint.header.tensors {
        let t = checkpoint
            .params
            .values
            .get(&entry.name)
            .ok_or_else(|| bad(path, format!("tensor {} missing", entry.name)))?;
        for v in t.iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, TrainError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad(path, "not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(path, format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + len).ok_or_else(|| bad(path, "truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| bad(path, e.to_string()))?;
    let mut pos = 16 + len;
    let mut params = ParameterSet::default();
    for entry in &header.tensors {
        let count: usize = entry.shape.iter().product();
        let blob = bytes
            .get(pos..pos + 4 * count)
            .ok_or_else(|| bad(path, format!("truncated tensor {}", entry.name)))?;
        let values: Vec<f64> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let t = Tensor::from_shape_vec(IxDyn(&entry.shape), values).map_err(|e| bad(path, e.to_string()))?;
        params.values.insert(entry.name.clone(), t);
        pos += 4 * count;
    }
    if pos != bytes.len() {
        return Err(bad(path, format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(Checkpoint { header, params })
}
