//! Mini-batch training with validation-driven early stopping.

mod checkpoint;
mod data;
mod report;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{class_auprcs, macro_auprc, EvalError};
use crate::features::FeatureKind;
use crate::nn::{
    bce_loss, derive_seed, mixup_batch, Adam, AdamConfig, Mode, Model, ModelConfig, MixupConfig, NnError, ParameterSet,
    Parameterized, Tensor,
};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
pub use data::Dataset;
pub use report::{EpochRecord, TrainReport};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("non-finite loss at epoch {epoch}, batch {batch}; parameter norms: {norms}")]
    NonFinite { epoch: usize, batch: usize, norms: String },
    #[error("non-finite validation metric at epoch {epoch}")]
    NonFiniteMetric { epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub feature: FeatureKind,
    pub model: ModelConfig,
    /// `None` disables mixup.
    pub mixup: Option<MixupConfig>,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Drives batch shuffling and mixup draws.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            feature: FeatureKind::LogMel,
            model: ModelConfig::default(),
            mixup: None,
            batch_size: 64,
            lr: 0.001,
            patience: 3,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(TrainError::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max_epochs must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::Config("lr must be positive".into()));
        }
        if let Some(m) = &self.mixup {
            if !(m.alpha.is_finite() && m.alpha > 0.0) {
                return Err(TrainError::Config("mixup alpha must be positive".into()));
            }
        }
        self.model.validate().map_err(TrainError::Config)
    }
}

/// Tracks the best metric and counts epochs without strict improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> StopDecision {
        match self.best {
            Some((_, b)) if metric.is_nan() || metric <= b => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, metric));
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }

    /// `(epoch, metric)` of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Holds the model, optimizer and random streams of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    adam: Adam,
    shuffle_rng: ChaCha8Rng,
    mixup_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let model = Model::new(config.model.clone())?;
        let adam = Adam::new(AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        });
        Ok(Self {
            shuffle_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "shuffle")),
            mixup_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "mixup")),
            config,
            model,
            adam,
        })
    }

    fn check_data(&self, data: &Dataset) -> Result<(), TrainError> {
        if data.is_empty() {
            return Err(TrainError::Data("empty dataset".into()));
        }
        if data.kind != self.config.feature {
            return Err(TrainError::Data(format!(
                "dataset holds {} features, run expects {}",
                data.kind, self.config.feature
            )));
        }
        if self.config.model.context.uses_context() && data.contexts.is_none() {
            return Err(TrainError::Data(format!(
                "context mode {} needs context vectors",
                self.config.model.context
            )));
        }
        Ok(())
    }

    /// One pass over `data` in shuffled mini-batches; returns the mean loss.
    pub fn train_epoch(&mut self, data: &Dataset, epoch: usize) -> Result<f64, TrainError> {
        self.check_data(data)?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let use_ctx = self.config.model.context.uses_context();
        let mut total = 0.0;
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let (mut x, mut ctx, mut y) = data.batch(chunk, use_ctx);
            if let Some(m) = &self.config.mixup {
                let mixed = mixup_batch(&x, ctx.as_ref(), &y, m, &mut self.mixup_rng)?;
                x = mixed.features;
                ctx = mixed.contexts;
                y = mixed.labels;
            }
            self.model.zero_grads();
            let z = self.model.forward(&x, ctx.as_ref(), Mode::Train)?;
            let (loss, grad) = bce_loss(&z, &y)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    norms: parameter_norms(&self.model.parameters()),
                });
            }
            self.model.backward(&grad)?;
            self.adam.step(&mut self.model)?;
            total += loss * chunk.len() as f64;
        }
        Ok(total / data.len() as f64)
    }

    /// Scores `[classes, N]` in evaluation mode, columns in dataset order.
    pub fn predict(&mut self, data: &Dataset) -> Result<Array2<f64>, TrainError> {
        predict(&mut self.model, data, self.config.batch_size)
    }

    /// Trains until the validation macro-AUPRC stops improving, then restores
    /// the best epoch's parameters.
    pub fn fit(&mut self, train: &Dataset, validate: &Dataset) -> Result<TrainReport, TrainError> {
        self.check_data(validate)?;
        let labels = validate.labels.t().to_owned();
        let batch = self.config.batch_size;
        // warns once about classes without validation positives
        macro_auprc(&labels, &labels)?;
        self.fit_with(train, |model, _| {
            let z = predict(model, validate, batch)?;
            let defined: Vec<f64> = class_auprcs(&z, &labels)?.into_iter().flatten().collect();
            Ok(defined.iter().sum::<f64>() / defined.len() as f64)
        })
    }

    /// Like [`Trainer::fit`] with a caller-supplied validation metric
    /// (higher is better), evaluated after every epoch.
    pub fn fit_with<F>(&mut self, train: &Dataset, mut metric: F) -> Result<TrainReport, TrainError>
    where
        F: FnMut(&mut Model, usize) -> Result<f64, TrainError>,
    {
        let mut stopper = EarlyStopper::new(self.config.patience);
        let mut best_params: Option<ParameterSet> = None;
        let mut epochs = Vec::new();
        for epoch in 1..=self.config.max_epochs {
            let loss = self.train_epoch(train, epoch)?;
            let m = metric(&mut self.model, epoch)?;
            if !m.is_finite() {
                return Err(TrainError::NonFiniteMetric { epoch });
            }
            log::info!("epoch {epoch}: loss {loss:.6}, metric {m:.6}");
            epochs.push(EpochRecord {
                epoch,
                train_loss: loss,
                metric: m,
            });
            match stopper.observe(epoch, m) {
                StopDecision::Improved => best_params = Some(self.model.parameters()),
                StopDecision::Continue => {}
                StopDecision::Stop => break,
            }
        }
        let (best_epoch, best_metric) = stopper.best().expect("at least one epoch");
        self.model.load_parameters(best_params.as_ref().expect("snapshot of best epoch"))?;
        Ok(TrainReport {
            stopped_epoch: epochs.len(),
            epochs,
            best_epoch,
            best_metric,
        })
    }
}

fn parameter_norms(params: &ParameterSet) -> String {
    ["cnn", "ctx", "head"]
        .iter()
        .map(|p| format!("{p}={:.4e}", params.partition(p).l2_norm()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Evaluation-mode scores `[classes, N]`, columns in dataset order.
pub fn predict(model: &mut Model, data: &Dataset, batch_size: usize) -> Result<Array2<f64>, TrainError> {
    let use_ctx = model.config().context.uses_context();
    if use_ctx && data.contexts.is_none() {
        return Err(TrainError::Data("model needs context vectors".into()));
    }
    let classes = model.config().classes;
    let mut out = Array2::zeros((classes, data.len()));
    let order: Vec<usize> = (0..data.len()).collect();
    for chunk in order.chunks(batch_size.max(1)) {
        let (x, ctx, _) = data.batch(chunk, use_ctx);
        let z: Tensor = model.forward(&x, ctx.as_ref(), Mode::Eval)?;
        let z = z.into_dimensionality::<ndarray::Ix2>().expect("[N, C] scores");
        for (k, &i) in chunk.iter().enumerate() {
            out.column_mut(i).assign(&z.index_axis(Axis(0), k));
        }
    }
    Ok(out)
}
