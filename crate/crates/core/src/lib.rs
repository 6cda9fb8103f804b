//! Multimodal urban sound tagging: audio decoding, spectrogram features,
//! spatiotemporal context encoding, a small convolutional network engine,
//! training with early stopping, and AUPRC-based evaluation and fusion.

pub mod classes;
pub mod context;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod nn;
pub mod pipeline;
pub mod train;

use thiserror::Error;

pub use classes::{CoarseClass, LabelVector, NUM_CLASSES};
pub use context::{ContextVector, NormStats, CONTEXT_DIM};
pub use corpus::{AnnotationRecord, AudioClip, Split};
pub use eval::ScoreMatrix;
pub use features::{FeatureKind, FeatureParams, FeatureTensor};
pub use nn::{ContextMode, Model, ModelConfig, Tensor, Variant};
pub use train::{Dataset, TrainConfig, TrainReport};

/// Broad failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Feature(#[from] features::FeatureError),
    #[error(transparent)]
    Context(#[from] context::ContextError),
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Train(#[from] train::TrainError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use features::FeatureError;
        use train::TrainError;
        match self {
            Error::Config(_) | Error::Feature(FeatureError::Config(_)) | Error::Train(TrainError::Config(_)) => {
                ErrorKind::Config
            }
            Error::Corpus(corpus::CorpusError::Recipe(_)) => ErrorKind::Config,
            Error::Train(TrainError::NonFinite { .. } | TrainError::NonFiniteMetric { .. }) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
