//! Minimal reverse-mode network engine.
//!
//! Every layer caches what it needs during `forward` and turns an upstream
//! gradient into a downstream one in `backward`, accumulating parameter
//! gradients on the way. Tensors are dynamically shaped `f64` arrays; layers
//! check the rank they expect and report shape errors by layer name.

pub mod activation;
pub mod adam;
pub mod autopool;
pub mod block;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod mixup;
pub mod model;
pub mod norm;
pub mod pool;

use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use activation::{LeakyRelu, Sigmoid};
pub use adam::{Adam, AdamConfig};
pub use autopool::AutoPool;
pub use block::{ConvBlock, ResidualBlock};
pub use conv::Conv2d;
pub use dense::Dense;
pub use gradcheck::{check_layer, check_model, relative_error, FD_STEP};
pub use loss::bce_loss;
pub use lstm::LstmEncoder;
pub use mixup::{draw_pairs, mixup_batch, mixup_with, MixedBatch, MixupConfig};
pub use model::{ContextMode, Model, ModelConfig, Variant};
pub use norm::BatchNorm2d;
pub use pool::{AvgPool2d, FreqMean};

pub type Tensor = ArrayD<f64>;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error in {layer}: {message}")]
    Shape { layer: String, message: String },
    #[error("backward called on {0} before forward")]
    NoCache(String),
    #[error("parameter {name}: {message}")]
    Parameter { name: String, message: String },
}

pub(crate) fn shape_err(layer: &str, message: impl Into<String>) -> NnError {
    NnError::Shape {
        layer: layer.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// A named value with its accumulated gradient. Non-trainable entries hold
/// running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.raw_dim());
        Self {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(value: Tensor) -> Self {
        Self {
            trainable: false,
            ..Self::new(value)
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(Tensor::zeros(IxDyn(shape)))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything that owns named parameters.
pub trait Parameterized {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));

    fn zero_grads(&mut self) {
        self.visit_params("", &mut |_, p| p.zero_grad());
    }

    fn parameters(&mut self) -> ParameterSet {
        let mut set = ParameterSet::default();
        self.visit_params("", &mut |name, p| {
            set.values.insert(name.to_string(), p.value.clone());
        });
        set
    }

    /// Overwrites every parameter from `set`; names and shapes must match exactly.
    fn load_parameters(&mut self, set: &ParameterSet) -> Result<(), NnError> {
        let mut seen = 0;
        let mut error = None;
        self.visit_params("", &mut |name, p| {
            if error.is_some() {
                return;
            }
            match set.values.get(name) {
                Some(v) if v.shape() == p.value.shape() => {
                    p.value.assign(v);
                    seen += 1;
                }
                Some(v) => {
                    error = Some(NnError::Parameter {
                        name: name.to_string(),
                        message: format!("expected shape {:?}, found {:?}", p.value.shape(), v.shape()),
                    })
                }
                None => {
                    error = Some(NnError::Parameter {
                        name: name.to_string(),
                        message: "missing".into(),
                    })
                }
            }
        });
        if let Some(e) = error {
            return Err(e);
        }
        if seen != set.values.len() {
            return Err(NnError::Parameter {
                name: "*".into(),
                message: format!("set holds {} entries, model uses {seen}", set.values.len()),
            });
        }
        Ok(())
    }

    fn trainable_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, p| {
            if p.trainable {
                n += p.value.len()
            }
        });
        n
    }
}

/// A layer with a single tensor input and output.
pub trait Layer: Parameterized {
    fn name(&self) -> &str;
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError>;
    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError>;
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Value snapshot of every parameter and running statistic, keyed by dotted name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    pub values: BTreeMap<String, Tensor>,
}

impl ParameterSet {
    /// Entries whose name starts with `prefix.`; the model uses `cnn`, `ctx` and `head`.
    pub fn partition(&self, prefix: &str) -> ParameterSet {
        let dotted = format!("{prefix}.");
        ParameterSet {
            values: self
                .values
                .iter()
                .filter(|(k, _)| k.starts_with(&dotted))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.values().flat_map(|v| v.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Seed derived from a base seed and a string tag (FNV-1a mixed with SplitMix64).
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform `±sqrt(6 / fan_in)` initialization from a stream keyed by `tag`.
pub(crate) fn init_uniform(shape: &[usize], fan_in: usize, seed: u64, tag: &str) -> Tensor {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tag));
    Tensor::from_shape_simple_fn(IxDyn(shape), || dist.sample(&mut rng))
}
