//! The tagging network: convolutional trunk, optional context encoder and a
//! per-frame head pooled over time.

use std::fmt;
use std::str::FromStr;

use ndarray::IxDyn;
use serde::{Deserialize, Serialize};

use super::dense::{concat_context, split_context_grad};
use super::{
    join, shape_err, AutoPool, AvgPool2d, ConvBlock, Dense, FreqMean, LeakyRelu, Layer, LstmEncoder, Mode, NnError,
    Param, Parameterized, ResidualBlock, Sigmoid, Tensor, LEAKY_SLOPE,
};
use crate::classes::NUM_CLASSES;
use crate::context::CONTEXT_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Cnn9,
    Cnn9Res,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Cnn9 => "cnn9",
            Variant::Cnn9Res => "cnn9-res",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cnn9" => Ok(Variant::Cnn9),
            "cnn9-res" => Ok(Variant::Cnn9Res),
            _ => Err(format!("unknown variant {s:?} (expected cnn9 or cnn9-res)")),
        }
    }
}

/// How the context vector enters the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    None,
    Raw,
    Fc,
    Lstm,
}

impl ContextMode {
    pub fn uses_context(self) -> bool {
        self != ContextMode::None
    }
}

impl fmt::Display for ContextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContextMode::None => "none",
            ContextMode::Raw => "raw",
            ContextMode::Fc => "fc",
            ContextMode::Lstm => "lstm",
        })
    }
}

impl FromStr for ContextMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ContextMode::None),
            "raw" => Ok(ContextMode::Raw),
            "fc" => Ok(ContextMode::Fc),
            "lstm" => Ok(ContextMode::Lstm),
            _ => Err(format!("unknown context mode {s:?} (expected none, raw, fc or lstm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Output channels of each convolutional block.
    pub widths: Vec<usize>,
    /// Average-pooling window after each block, `[time, frequency]`.
    pub pools: Vec<[usize; 2]>,
    pub context: ContextMode,
    pub encoder_width: usize,
    pub hidden_units: usize,
    pub leaky_slope: f64,
    /// Start the fusion weights that read the context block at zero.
    pub zero_init_fusion: bool,
    pub input_bands: usize,
    pub classes: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Cnn9,
            widths: vec![64, 128, 256, 256],
            pools: vec![[2, 2], [2, 2], [2, 2], [1, 1]],
            context: ContextMode::None,
            encoder_width: 32,
            hidden_units: 128,
            leaky_slope: LEAKY_SLOPE,
            zero_init_fusion: false,
            input_bands: 64,
            classes: NUM_CLASSES,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err("widths must be a nonempty list of positive channel counts".into());
        }
        if self.pools.len() != self.widths.len() {
            return Err(format!(
                "{} pooling windows for {} blocks",
                self.pools.len(),
                self.widths.len()
            ));
        }
        if self.pools.iter().flatten().any(|&p| p == 0) {
            return Err("pooling windows must be positive".into());
        }
        if self.hidden_units == 0 || self.classes == 0 || self.input_bands == 0 {
            return Err("hidden_units, classes and input_bands must be positive".into());
        }
        if matches!(self.context, ContextMode::Fc | ContextMode::Lstm) && self.encoder_width == 0 {
            return Err("encoder_width must be positive".into());
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err("leaky_slope must be finite and nonnegative".into());
        }
        Ok(())
    }

    /// Width of the context block appended to each frame.
    pub fn context_width(&self) -> usize {
        match self.context {
            ContextMode::None => 0,
            ContextMode::Raw => CONTEXT_DIM,
            ContextMode::Fc | ContextMode::Lstm => self.encoder_width,
        }
    }

    /// Human-readable stage list, e.g. `conv-block(64)`, `pool(2x2)`.
    pub fn layer_plan(&self) -> Vec<String> {
        let last = self.widths.len() - 1;
        let mut plan = Vec::new();
        for (i, (w, p)) in self.widths.iter().zip(&self.pools).enumerate() {
            let kind = if i == last && self.variant == Variant::Cnn9Res {
                "residual-block"
            } else {
                "conv-block"
            };
            plan.push(format!("{kind}({w})"));
            plan.push(format!("pool({}x{})", p[0], p[1]));
        }
        plan.push("freq-mean".into());
        match self.context {
            ContextMode::None => {}
            ContextMode::Raw => plan.push(format!("concat-context({CONTEXT_DIM})")),
            ContextMode::Fc => plan.push(format!("fc-encoder({}) concat-context", self.encoder_width)),
            ContextMode::Lstm => plan.push(format!("lstm-encoder({}) concat-context", self.encoder_width)),
        }
        plan.push(format!("per-frame-dense({})", self.hidden_units));
        plan.push(format!("per-frame-dense({}) sigmoid", self.classes));
        plan.push("autopool".into());
        plan
    }

    /// Trunk output `(frames, bands, channels)` for a `frames × bands` input.
    pub fn trunk_shape(&self, frames: usize, bands: usize) -> (usize, usize, usize) {
        let (t, f) = self.pools.iter().fold((frames, bands), |(t, f), p| (t / p[0], f / p[1]));
        (t, f, *self.widths.last().unwrap_or(&0))
    }
}

#[derive(Debug, Clone)]
enum Stage {
    Conv(Box<ConvBlock>),
    Res(Box<ResidualBlock>),
}

impl Stage {
    fn layer(&mut self) -> &mut dyn Layer {
        match self {
            Stage::Conv(b) => b.as_mut(),
            Stage::Res(b) => b.as_mut(),
        }
    }
}

#[derive(Debug, Clone)]
enum Encoder {
    Fc(Dense, LeakyRelu),
    Lstm(LstmEncoder),
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    stages: Vec<Stage>,
    pools: Vec<AvgPool2d>,
    freq_mean: FreqMean,
    encoder: Option<Encoder>,
    fusion: Dense,
    fusion_act: LeakyRelu,
    output: Dense,
    sigmoid: Sigmoid,
    autopool: AutoPool,
    frame_width: usize,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, NnError> {
        config.validate().map_err(|message| NnError::Parameter {
            name: "model".into(),
            message,
        })?;
        let seed = config.seed;
        let slope = config.leaky_slope;
        let last = config.widths.len() - 1;
        let mut stages = Vec::new();
        let mut pools = Vec::new();
        let mut inputs = 1;
        for (i, (&w, p)) in config.widths.iter().zip(&config.pools).enumerate() {
            let name = format!("block{}", i + 1);
            stages.push(if i == last && config.variant == Variant::Cnn9Res {
                Stage::Res(Box::new(ResidualBlock::new(&name, inputs, w, slope, seed)))
            } else {
                Stage::Conv(Box::new(ConvBlock::new(&name, inputs, w, slope, seed)))
            });
            pools.push(AvgPool2d::new(&format!("pool{}", i + 1), (p[0], p[1])));
            inputs = w;
        }
        if let Some(Stage::Conv(first)) = stages.first_mut() {
            first.conv1.input_grad = false;
        }
        if let Some(Stage::Res(first)) = stages.first_mut() {
            first.conv1.input_grad = false;
            first.shortcut.input_grad = false;
        }
        let encoder = match config.context {
            ContextMode::Fc => Some(Encoder::Fc(
                Dense::new("fc", CONTEXT_DIM, config.encoder_width, seed),
                LeakyRelu::new("fc_act", slope),
            )),
            ContextMode::Lstm => Some(Encoder::Lstm(LstmEncoder::new("lstm", CONTEXT_DIM, config.encoder_width, seed))),
            _ => None,
        };
        let frame_width = inputs;
        let fusion = Dense::with_blocks(
            "fusion",
            &[(frame_width, false), (config.context_width(), config.zero_init_fusion)],
            config.hidden_units,
            seed,
        );
        Ok(Self {
            stages,
            pools,
            freq_mean: FreqMean::new("freq_mean"),
            encoder,
            fusion,
            fusion_act: LeakyRelu::new("fusion_act", slope),
            output: Dense::new("output", config.hidden_units, config.classes, seed),
            sigmoid: Sigmoid::new("sigmoid"),
            autopool: AutoPool::new("autopool", config.classes),
            frame_width,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// When enabled the first convolution also propagates gradients to the
    /// input features. Off by default since training never needs them.
    pub fn set_input_grad(&mut self, enabled: bool) {
        match self.stages.first_mut() {
            Some(Stage::Conv(b)) => b.conv1.input_grad = enabled,
            Some(Stage::Res(b)) => {
                b.conv1.input_grad = enabled;
                b.shortcut.input_grad = enabled;
            }
            None => {}
        }
    }

    fn as_image(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let bands = self.config.input_bands;
        let shape = x.shape();
        let ok = match shape.len() {
            3 => shape[2] == bands,
            4 => shape[1] == 1 && shape[3] == bands,
            _ => false,
        };
        if !ok {
            return Err(shape_err(
                "input",
                format!("expected [N, T, {bands}] or [N, 1, T, {bands}], got {shape:?}"),
            ));
        }
        if shape.len() == 3 {
            Ok(x.clone().into_shape_with_order(IxDyn(&[shape[0], 1, shape[1], shape[2]])).expect("contiguous"))
        } else {
            Ok(x.clone())
        }
    }

    /// Clip scores `[N, classes]` from features `[N, T, bands]` and, when the
    /// context mode needs it, context vectors `[N, 85]`.
    pub fn forward(&mut self, features: &Tensor, context: Option<&Tensor>, mode: Mode) -> Result<Tensor, NnError> {
        let mut x = self.as_image(features)?;
        let n = x.shape()[0];
        for (stage, pool) in self.stages.iter_mut().zip(self.pools.iter_mut()) {
            x = stage.layer().forward(&x, mode)?;
            x = pool.forward(&x, mode)?;
        }
        let mut frames = self.freq_mean.forward(&x, mode)?;
        if self.config.context.uses_context() {
            let ctx = context.ok_or_else(|| shape_err("concat_context", "context mode requires context vectors"))?;
            if ctx.shape() != [n, CONTEXT_DIM] {
                return Err(shape_err(
                    "concat_context",
                    format!("expected context [{n}, {CONTEXT_DIM}], got {:?}", ctx.shape()),
                ));
            }
            let encoded = match &mut self.encoder {
                None => ctx.clone(),
                Some(Encoder::Fc(d, a)) => {
                    let h = d.forward(ctx, mode)?;
                    a.forward(&h, mode)?
                }
                Some(Encoder::Lstm(l)) => l.forward(ctx, mode)?,
            };
            frames = concat_context(&frames, &encoded)?;
        }
        let h = self.fusion.forward(&frames, mode)?;
        let h = self.fusion_act.forward(&h, mode)?;
        let h = self.output.forward(&h, mode)?;
        let p = self.sigmoid.forward(&h, mode)?;
        self.autopool.forward(&p, mode)
    }

    /// Backpropagates `d loss / d scores` (`[N, classes]`), accumulating
    /// parameter gradients. Returns the feature gradient (zeros unless
    /// [`Model::set_input_grad`] is on) and the context gradient.
    pub fn backward(&mut self, grad: &Tensor) -> Result<(Tensor, Option<Tensor>), NnError> {
        let g = self.autopool.backward(grad)?;
        let g = self.sigmoid.backward(&g)?;
        let g = self.output.backward(&g)?;
        let g = self.fusion_act.backward(&g)?;
        let g = self.fusion.backward(&g)?;
        let (g, ctx_grad) = if self.config.context.uses_context() {
            let (frames, ctx) = split_context_grad(&g, self.frame_width);
            let ctx = match &mut self.encoder {
                None => ctx,
                Some(Encoder::Fc(d, a)) => {
                    let c = a.backward(&ctx)?;
                    d.backward(&c)?
                }
                Some(Encoder::Lstm(l)) => l.backward(&ctx)?,
            };
            (frames, Some(ctx))
        } else {
            (g, None)
        };
        let mut g = self.freq_mean.backward(&g)?;
        for (stage, pool) in self.stages.iter_mut().zip(self.pools.iter_mut()).rev() {
            g = pool.backward(&g)?;
            g = stage.layer().backward(&g)?;
        }
        let s = g.shape().to_vec();
        let g = g.into_shape_with_order(IxDyn(&[s[0], s[2], s[3]])).expect("single input channel");
        Ok((g, ctx_grad))
    }

    /// Frequency-averaged trunk output `[N, T', M]`, evaluation mode.
    pub fn embed(&mut self, features: &Tensor) -> Result<Tensor, NnError> {
        let mut x = self.as_image(features)?;
        for (stage, pool) in self.stages.iter_mut().zip(self.pools.iter_mut()) {
            x = stage.layer().forward(&x, Mode::Eval)?;
            x = pool.forward(&x, Mode::Eval)?;
        }
        self.freq_mean.forward(&x, Mode::Eval)
    }
}

impl Parameterized for Model {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        let cnn = join(prefix, "cnn");
        for s in &mut self.stages {
            s.layer().visit_params(&cnn, f);
        }
        let ctx = join(prefix, "ctx");
        match &mut self.encoder {
            Some(Encoder::Fc(d, _)) => d.visit_params(&ctx, f),
            Some(Encoder::Lstm(l)) => l.visit_params(&ctx, f),
            None => {}
        }
        let head = join(prefix, "head");
        self.fusion.visit_params(&head, f);
        self.output.visit_params(&head, f);
        self.autopool.visit_params(&head, f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(variant: Variant, context: ContextMode) -> ModelConfig {
        ModelConfig {
            variant,
            widths: vec![2, 2, 2, 2],
            context,
            encoder_width: 4,
            hidden_units: 6,
            input_bands: 16,
            seed: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn default_trunk_shape() {
        assert_eq!(ModelConfig::default().trunk_shape(42, 64), (5, 8, 256));
    }

    #[test]
    fn output_in_unit_interval() {
        for mode in [ContextMode::None, ContextMode::Raw, ContextMode::Fc, ContextMode::Lstm] {
            let mut m = Model::new(tiny(Variant::Cnn9Res, mode)).unwrap();
            let x = Tensor::from_shape_fn(IxDyn(&[2, 16, 16]), |d| ((d[1] * 7 + d[2]) % 5) as f64 - 2.0);
            let ctx = Tensor::from_elem(IxDyn(&[2, CONTEXT_DIM]), 0.1);
            let z = m.forward(&x, Some(&ctx), Mode::Train).unwrap();
            assert_eq!(z.shape(), &[2, NUM_CLASSES]);
            assert!(z.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn missing_context_is_an_error() {
        let mut m = Model::new(tiny(Variant::Cnn9, ContextMode::Raw)).unwrap();
        let x = Tensor::zeros(IxDyn(&[1, 16, 16]));
        assert!(m.forward(&x, None, Mode::Eval).is_err());
    }

    #[test]
    fn wrong_band_count_names_input() {
        let mut m = Model::new(tiny(Variant::Cnn9, ContextMode::None)).unwrap();
        let err = m.forward(&Tensor::zeros(IxDyn(&[1, 16, 15])), None, Mode::Eval).unwrap_err();
        assert!(err.to_string().contains("input"));
    }

    #[test]
    fn parameter_partitions() {
        let mut m = Model::new(tiny(Variant::Cnn9, ContextMode::Fc)).unwrap();
        let p = m.parameters();
        let total = p.partition("cnn").len() + p.partition("ctx").len() + p.partition("head").len();
        assert_eq!(total, p.len());
        assert_eq!(p.values["head.autopool.alpha"].len(), NUM_CLASSES);
    }
}
