//! Glue from records and clips to training-ready datasets.

use std::collections::HashMap;

use crate::context::{fit_normalizer, NormStats};
use crate::corpus::{AnnotationRecord, AudioClip, Split};
use crate::features::{FeatureError, FeatureExtractor, FeatureKind, FeatureParams, FeatureTensor};
use crate::train::{Dataset, TrainError};

/// Features of one kind for every clip, keyed by clip id.
pub fn extract_kind(
    records: &[AnnotationRecord],
    clips: &[AudioClip],
    kind: FeatureKind,
    params: &FeatureParams,
) -> Result<HashMap<String, FeatureTensor>, FeatureError> {
    let extractor = FeatureExtractor::new(*params)?;
    records
        .iter()
        .zip(clips)
        .map(|(r, c)| Ok((r.clip_id.clone(), extractor.extract(c, kind)?)))
        .collect()
}

/// Train and validate datasets plus the location statistics fitted on the
/// training split (present when `with_context`).
#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: Dataset,
    pub validate: Dataset,
    pub norm: Option<NormStats>,
}

pub fn build_split(
    records: &[AnnotationRecord],
    features: &HashMap<String, FeatureTensor>,
    kind: FeatureKind,
    with_context: bool,
) -> Result<SplitData, TrainError> {
    let (train, validate): (Vec<AnnotationRecord>, Vec<AnnotationRecord>) =
        records.iter().cloned().partition(|r| r.split == Split::Train);
    if train.is_empty() || validate.is_empty() {
        return Err(TrainError::Data(format!(
            "need both splits, found {} train and {} validate records",
            train.len(),
            validate.len()
        )));
    }
    let norm = if with_context {
        Some(fit_normalizer(&train).map_err(|e| TrainError::Data(e.to_string()))?)
    } else {
        None
    };
    let lookup = |r: &AnnotationRecord| features.get(&r.clip_id);
    Ok(SplitData {
        train: Dataset::from_records(&train, kind, norm.as_ref(), lookup)?,
        validate: Dataset::from_records(&validate, kind, norm.as_ref(), lookup)?,
        norm,
    })
}
