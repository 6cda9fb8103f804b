//! TOML run configuration for `train`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use urbantag::context::TimeBlock;
use urbantag::features::hpss::HpssParams;
use urbantag::nn::{derive_seed, MixupConfig};
use urbantag::{ContextMode, Error, FeatureKind, FeatureParams, ModelConfig, TrainConfig, Variant};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub io: IoSection,
    pub features: FeaturesSection,
    pub context: ContextSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub manifest: PathBuf,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            manifest: "manifest.csv".into(),
            cache_dir: "cache".into(),
            out_dir: "run".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub kinds: Vec<FeatureKind>,
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub bands: usize,
    pub floor_db: f64,
    pub normalize: bool,
    pub hpss: HpssParams,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        let p = FeatureParams::default();
        Self {
            kinds: vec![FeatureKind::LogMel],
            sample_rate: p.sample_rate,
            n_fft: p.n_fft,
            hop: p.hop,
            bands: p.bands,
            floor_db: p.floor_db,
            normalize: p.normalize,
            hpss: p.hpss,
        }
    }
}

impl FeaturesSection {
    pub fn params(&self) -> FeatureParams {
        FeatureParams {
            sample_rate: self.sample_rate,
            n_fft: self.n_fft,
            hop: self.hop,
            bands: self.bands,
            floor_db: self.floor_db,
            hpss: self.hpss,
            normalize: self.normalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextSection {
    pub mode: ContextMode,
    /// Drop training records far from the others before training.
    pub filter_outliers: bool,
    pub outlier_km: f64,
    /// Rebalance the training split over this time block.
    pub rebalance: Option<TimeBlock>,
}

impl Default for ContextSection {
    fn default() -> Self {
        Self {
            mode: ContextMode::None,
            filter_outliers: false,
            outlier_km: 20.0,
            rebalance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Variant,
    pub widths: Vec<usize>,
    pub pools: Vec<[usize; 2]>,
    pub encoder_width: usize,
    pub hidden_units: usize,
    pub leaky_slope: f64,
    pub zero_init_fusion: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            variant: m.variant,
            widths: m.widths,
            pools: m.pools,
            encoder_width: m.encoder_width,
            hidden_units: m.hidden_units,
            leaky_slope: m.leaky_slope,
            zero_init_fusion: m.zero_init_fusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub feature: FeatureKind,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub mixup: bool,
    pub mixup_alpha: f64,
    pub mixup_per_sample: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let m = MixupConfig::default();
        Self {
            feature: t.feature,
            batch_size: t.batch_size,
            lr: t.lr,
            patience: t.patience,
            max_epochs: t.max_epochs,
            mixup: false,
            mixup_alpha: m.alpha,
            mixup_per_sample: m.per_sample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub tau: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { tau: 0.5 }
    }
}

impl RunConfig {
    /// Parses a TOML document; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, Error> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(format!("config: {}", e.message())))?;
        for p in [&mut cfg.io.manifest, &mut cfg.io.cache_dir, &mut cfg.io.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            variant: self.model.variant,
            widths: self.model.widths.clone(),
            pools: self.model.pools.clone(),
            context: self.context.mode,
            encoder_width: self.model.encoder_width,
            hidden_units: self.model.hidden_units,
            leaky_slope: self.model.leaky_slope,
            zero_init_fusion: self.model.zero_init_fusion,
            input_bands: self.features.bands,
            seed: derive_seed(self.seed, "model"),
            ..ModelConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            feature: self.train.feature,
            model: self.model_config(),
            mixup: self.train.mixup.then_some(MixupConfig {
                alpha: self.train.mixup_alpha,
                per_sample: self.train.mixup_per_sample,
            }),
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            patience: self.train.patience,
            max_epochs: self.train.max_epochs,
            seed: derive_seed(self.seed, "train"),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !self.features.kinds.contains(&self.train.feature) {
            return Err(Error::Config(format!(
                "train.feature {} is not among features.kinds",
                self.train.feature
            )));
        }
        if !(self.eval.tau.is_finite()) {
            return Err(Error::Config("eval.tau must be finite".into()));
        }
        if self.context.outlier_km.is_nan() || self.context.outlier_km <= 0.0 {
            return Err(Error::Config("context.outlier_km must be positive".into()));
        }
        self.train_config().validate()?;
        Ok(())
    }
}
