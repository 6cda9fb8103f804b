use ndarray::{Array2, Array3, Axis};

use super::TrainError;
use crate::classes::NUM_CLASSES;
use crate::context::{encode_context, NormStats, CONTEXT_DIM};
use crate::corpus::AnnotationRecord;
use crate::features::{FeatureKind, FeatureTensor};
use crate::nn::Tensor;

/// Clip features of one kind with their context vectors and labels, all in
/// the same clip order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: FeatureKind,
    pub clip_ids: Vec<String>,
    /// `[N, T, bands]`
    pub features: Array3<f64>,
    /// `[N, 85]`
    pub contexts: Option<Array2<f64>>,
    /// `[N, classes]`, values in `[0, 1]`
    pub labels: Array2<f64>,
}

impl Dataset {
    pub fn new(
        kind: FeatureKind,
        clip_ids: Vec<String>,
        features: &[Array2<f64>],
        contexts: Option<Array2<f64>>,
        labels: Array2<f64>,
    ) -> Result<Self, TrainError> {
        let n = clip_ids.len();
        if features.len() != n || labels.nrows() != n {
            return Err(TrainError::Data(format!(
                "{n} clip ids, {} feature grids, {} label rows",
                features.len(),
                labels.nrows()
            )));
        }
        let (t, f) = features.first().map_or((0, 0), |x| x.dim());
        if let Some((i, x)) = features.iter().enumerate().find(|(_, x)| x.dim() != (t, f)) {
            return Err(TrainError::Data(format!(
                "clip {} has a {:?} feature grid, expected {:?}",
                clip_ids[i],
                x.dim(),
                (t, f)
            )));
        }
        if let Some(c) = &contexts {
            if c.dim() != (n, CONTEXT_DIM) {
                return Err(TrainError::Data(format!("context matrix {:?}, expected ({n}, {CONTEXT_DIM})", c.dim())));
            }
        }
        let mut stacked = Array3::zeros((n, t, f));
        for (mut dst, src) in stacked.axis_iter_mut(Axis(0)).zip(features) {
            dst.assign(src);
        }
        Ok(Self {
            kind,
            clip_ids,
            features: stacked,
            contexts,
            labels,
        })
    }

    /// Assembles a dataset from manifest records; `feature` looks up each
    /// clip's tensor. Contexts are encoded when `norm` is given.
    pub fn from_records<'a, F>(
        records: &[AnnotationRecord],
        kind: FeatureKind,
        norm: Option<&NormStats>,
        mut feature: F,
    ) -> Result<Self, TrainError>
    where
        F: FnMut(&AnnotationRecord) -> Option<&'a FeatureTensor>,
    {
        let mut grids = Vec::with_capacity(records.len());
        for r in records {
            let t = feature(r).ok_or_else(|| TrainError::Data(format!("no {kind} features for clip {}", r.clip_id)))?;
            if t.kind != kind {
                return Err(TrainError::Data(format!("clip {} has {} features, expected {kind}", r.clip_id, t.kind)));
            }
            grids.push(t.values.clone());
        }
        let contexts = match norm {
            Some(stats) => {
                let mut m = Array2::zeros((records.len(), CONTEXT_DIM));
                for (i, r) in records.iter().enumerate() {
                    let v = encode_context(r, stats).map_err(|e| TrainError::Data(format!("clip {}: {e}", r.clip_id)))?;
                    m.row_mut(i).assign(&ndarray::ArrayView1::from(v.as_slice()));
                }
                Some(m)
            }
            None => None,
        };
        let mut labels = Array2::zeros((records.len(), NUM_CLASSES));
        for (i, r) in records.iter().enumerate() {
            for c in 0..NUM_CLASSES {
                labels[[i, c]] = r.labels[c] as u8 as f64;
            }
        }
        Self::new(kind, records.iter().map(|r| r.clip_id.clone()).collect(), &grids, contexts, labels)
    }

    pub fn len(&self) -> usize {
        self.clip_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clip_ids.is_empty()
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            kind: self.kind,
            clip_ids: indices.iter().map(|&i| self.clip_ids[i].clone()).collect(),
            features: self.features.select(Axis(0), indices),
            contexts: self.contexts.as_ref().map(|c| c.select(Axis(0), indices)),
            labels: self.labels.select(Axis(0), indices),
        }
    }

    /// Features `[B, T, bands]`, contexts `[B, 85]` when requested, labels `[B, classes]`.
    pub fn batch(&self, indices: &[usize], with_context: bool) -> (Tensor, Option<Tensor>, Tensor) {
        let x = self.features.select(Axis(0), indices).into_dyn();
        let ctx = if with_context {
            self.contexts.as_ref().map(|c| c.select(Axis(0), indices).into_dyn())
        } else {
            None
        };
        let y = self.labels.select(Axis(0), indices).into_dyn();
        (x, ctx, y)
    }
}
