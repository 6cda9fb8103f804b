use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::filterbank::{apply_filterbank, make_filterbank, FilterbankMatrix, Scale};
use super::hpss::{hpss, HpssParams};
use super::stft::{power_spectrogram, stft};
use super::{to_db, FeatureError, FeatureKind, Spectrogram, DB_FLOOR};
use crate::corpus::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureParams {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub bands: usize,
    pub floor_db: f64,
    pub hpss: HpssParams,
    /// Z-score every tensor over all of its cells after the decibel step.
    pub normalize: bool,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            n_fft: 1024,
            hop: 512,
            bands: 64,
            floor_db: DB_FLOOR,
            hpss: HpssParams::default(),
            normalize: false,
        }
    }
}

/// T × bands decibel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub values: Array2<f64>,
    pub kind: FeatureKind,
}

impl FeatureTensor {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bands(&self) -> usize {
        self.values.ncols()
    }
}

/// Holds the filterbanks so they are built once per parameter set.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    params: FeatureParams,
    mel: FilterbankMatrix,
    linear: FilterbankMatrix,
}

impl FeatureExtractor {
    pub fn new(params: FeatureParams) -> Result<Self, FeatureError> {
        Ok(Self {
            mel: make_filterbank(Scale::Mel, params.n_fft, params.bands, params.sample_rate)?,
            linear: make_filterbank(Scale::Linear, params.n_fft, params.bands, params.sample_rate)?,
            params,
        })
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    pub fn mel_bank(&self) -> &FilterbankMatrix {
        &self.mel
    }

    pub fn linear_bank(&self) -> &FilterbankMatrix {
        &self.linear
    }

    /// Extracts the requested kinds, sharing the STFT and HPSS work between them.
    pub fn extract_many(&self, clip: &AudioClip, kinds: &[FeatureKind]) -> Result<Vec<FeatureTensor>, FeatureError> {
        if clip.sample_rate() != self.params.sample_rate {
            return Err(FeatureError::Config(format!(
                "clip is sampled at {} Hz, extractor expects {} Hz (resample first)",
                clip.sample_rate(),
                self.params.sample_rate
            )));
        }
        let power = power_spectrogram(&stft(clip, self.params.n_fft, self.params.hop)?);
        let separated = if kinds.iter().any(|k| matches!(k, FeatureKind::HpssH | FeatureKind::HpssP)) {
            Some(hpss(&power, self.params.hpss)?)
        } else {
            None
        };
        kinds
            .iter()
            .map(|&kind| {
                let banded = match kind {
                    FeatureKind::LogMel => apply_filterbank(&power, &self.mel)?,
                    FeatureKind::LogLinear => apply_filterbank(&power, &self.linear)?,
                    FeatureKind::HpssH => apply_filterbank(&separated.as_ref().unwrap().harmonic, &self.mel)?,
                    FeatureKind::HpssP => apply_filterbank(&separated.as_ref().unwrap().percussive, &self.mel)?,
                };
                self.finish(&banded, kind)
            })
            .collect()
    }

    pub fn extract(&self, clip: &AudioClip, kind: FeatureKind) -> Result<FeatureTensor, FeatureError> {
        Ok(self.extract_many(clip, &[kind])?.remove(0))
    }

    fn finish(&self, banded: &Spectrogram, kind: FeatureKind) -> Result<FeatureTensor, FeatureError> {
        let mut values = to_db(banded, self.params.floor_db)?;
        if self.params.normalize {
            let mean = values.mean().unwrap_or(0.0);
            let std = values.std(0.0);
            let scale = if std > 0.0 { 1.0 / std } else { 1.0 };
            values.mapv_inplace(|v| (v - mean) * scale);
        }
        Ok(FeatureTensor { values, kind })
    }
}

pub fn extract_feature(clip: &AudioClip, kind: FeatureKind, params: &FeatureParams) -> Result<FeatureTensor, FeatureError> {
    FeatureExtractor::new(*params)?.extract(clip, kind)
}

/// All four feature kinds, in [`FeatureKind::ALL`] order.
pub fn extract_all(clip: &AudioClip, params: &FeatureParams) -> Result<Vec<FeatureTensor>, FeatureError> {
    FeatureExtractor::new(*params)?.extract_many(clip, &FeatureKind::ALL)
}
