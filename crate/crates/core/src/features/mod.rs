//! Spectrogram features: STFT, power, mel/linear filterbanks, decibels and HPSS.

pub mod cache;
pub mod extract;
pub mod filterbank;
pub mod hpss;
pub mod stft;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{read_feature_cache, write_feature_cache, CacheIndex, CacheRecord, FeatureCache};
pub use extract::{extract_all, extract_feature, FeatureExtractor, FeatureParams, FeatureTensor};
pub use filterbank::{apply_filterbank, make_filterbank, FilterbankMatrix, Scale};
pub use hpss::{hpss, hpss_objective, hpss_with_trace, HpssPair, HpssParams};
pub use stft::{power_spectrogram, stft, ComplexSpectrogram};

pub const DB_FLOOR: f64 = -100.0;
const POWER_EPSILON: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("clip of {len} samples is shorter than one {n_fft}-sample frame")]
    TooShort { len: usize, n_fft: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("feature cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What the columns of a [`Spectrogram`] index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    StftPower,
    Mel,
    Linear,
}

/// Nonnegative T×A time-frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Array2<f64>,
    pub axis: AxisKind,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bands(&self) -> usize {
        self.values.ncols()
    }

    pub fn total_energy(&self) -> f64 {
        self.values.sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    LogMel,
    LogLinear,
    HpssH,
    HpssP,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::LogMel,
        FeatureKind::LogLinear,
        FeatureKind::HpssH,
        FeatureKind::HpssP,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::LogMel => "log-mel",
            FeatureKind::LogLinear => "log-linear",
            FeatureKind::HpssH => "hpss-h",
            FeatureKind::HpssP => "hpss-p",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown feature kind {s:?} (expected log-mel, log-linear, hpss-h or hpss-p)"))
    }
}

/// Converts a nonnegative grid to decibels: `max(10 log10(max(v, 1e-10)), floor_db)`.
pub fn to_db(spec: &Spectrogram, floor_db: f64) -> Result<Array2<f64>, FeatureError> {
    if let Some(v) = spec.values.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(FeatureError::Domain(format!("decibel conversion of negative or NaN value {v}")));
    }
    Ok(spec
        .values
        .mapv(|v| (10.0 * v.max(POWER_EPSILON).log10()).max(floor_db)))
}
