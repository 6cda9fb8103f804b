//! Audio decoding, resampling, annotation manifests and synthetic corpora.

pub mod manifest;
pub mod resample;
pub mod synth;
pub mod wav;

use thiserror::Error;

pub use manifest::{load_manifest, read_manifest, save_manifest, write_manifest, AnnotationRecord, Split};
pub use resample::resample;
pub use synth::{synth_corpus, ClassRecipe, CorpusRecipe, Generator, SynthCorpus};
pub use wav::{decode_wav, encode_wav, SampleFormat};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed {chunk} chunk: {reason}")]
    Decode { chunk: String, reason: String },
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("manifest row {row}: {message}")]
    Manifest { row: usize, message: String },
    #[error("invalid corpus recipe: {0}")]
    Recipe(String),
    #[error("invalid sample rate {0}")]
    SampleRate(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono audio signal.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, CorpusError> {
        if sample_rate == 0 {
            return Err(CorpusError::SampleRate(sample_rate));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}
