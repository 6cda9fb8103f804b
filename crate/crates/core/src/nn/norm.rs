use ndarray::{Array1, Axis, Ix4};

use super::{join, shape_err, Layer, Mode, NnError, Param, Parameterized, Tensor};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

/// Per-channel batch normalization over `[N, C, H, W]`.
///
/// Training mode normalizes with batch statistics (biased variance) and
/// folds them into the running estimates as
/// `running = momentum * running + (1 - momentum) * batch`; the first
/// training batch seeds the running estimates directly. Evaluation mode
/// applies the running estimates as a fixed affine map.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    name: String,
    channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    /// Number of training batches seen so far (a one-element buffer).
    pub batches_seen: Param,
    pub momentum: f64,
    pub epsilon: f64,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    normalized: Tensor,
    inv_std: Array1<f64>,
    mode: Mode,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            name: name.to_string(),
            channels,
            gamma: Param::new(Tensor::ones(ndarray::IxDyn(&[channels]))),
            beta: Param::zeros(&[channels]),
            running_mean: Param::buffer(Tensor::zeros(ndarray::IxDyn(&[channels]))),
            running_var: Param::buffer(Tensor::ones(ndarray::IxDyn(&[channels]))),
            batches_seen: Param::buffer(Tensor::zeros(ndarray::IxDyn(&[1]))),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
            cache: None,
        }
    }
}

impl Parameterized for BatchNorm2d {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        let base = join(prefix, &self.name);
        f(&join(&base, "gamma"), &mut self.gamma);
        f(&join(&base, "beta"), &mut self.beta);
        f(&join(&base, "running_mean"), &mut self.running_mean);
        f(&join(&base, "running_var"), &mut self.running_var);
        f(&join(&base, "batches_seen"), &mut self.batches_seen);
    }
}

impl Layer for BatchNorm2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let x4 = x
            .view()
            .into_dimensionality::<Ix4>()
            .map_err(|_| shape_err(&self.name, format!("expected [N, C, H, W], got {:?}", x.shape())))?;
        let (n, c, h, w) = x4.dim();
        if c != self.channels {
            return Err(shape_err(&self.name, format!("expected {} channels, got {c}", self.channels)));
        }
        let count = (n * h * w) as f64;
        let (mean, var) = match mode {
            Mode::Train => {
                if n * h * w == 0 {
                    return Err(shape_err(&self.name, "empty batch"));
                }
                let mut mean = Array1::zeros(c);
                let mut var = Array1::zeros(c);
                for ch in 0..c {
                    let slab = x4.index_axis(Axis(1), ch);
                    let m = slab.sum() / count;
                    mean[ch] = m;
                    var[ch] = slab.iter().map(|v| (v - m).powi(2)).sum::<f64>() / count;
                }
                let first = self.batches_seen.value[[0]] == 0.0;
                for ch in 0..c {
                    let (rm, rv) = (&mut self.running_mean.value, &mut self.running_var.value);
                    if first {
                        rm[[ch]] = mean[ch];
                        rv[[ch]] = var[ch];
                    } else {
                        rm[[ch]] = self.momentum * rm[[ch]] + (1.0 - self.momentum) * mean[ch];
                        rv[[ch]] = self.momentum * rv[[ch]] + (1.0 - self.momentum) * var[ch];
                    }
                }
                self.batches_seen.value[[0]] += 1.0;
                (mean, var)
            }
            Mode::Eval => (
                Array1::from_iter(self.running_mean.value.iter().copied()),
                Array1::from_iter(self.running_var.value.iter().copied()),
            ),
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let mut normalized = x4.to_owned();
        let mut y = x4.to_owned();
        for ch in 0..c {
            let (m, s) = (mean[ch], inv_std[ch]);
            let (g, b) = (self.gamma.value[[ch]], self.beta.value[[ch]]);
            normalized.index_axis_mut(Axis(1), ch).mapv_inplace(|v| (v - m) * s);
            ndarray::Zip::from(y.index_axis_mut(Axis(1), ch))
                .and(normalized.index_axis(Axis(1), ch))
                .for_each(|y, &xh| *y = g * xh + b);
        }
        self.cache = Some(Cache {
            normalized: normalized.into_dyn(),
            inv_std,
            mode,
        });
        Ok(y.into_dyn())
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let cache = self.cache.as_ref().ok_or_else(|| NnError::NoCache(self.name.clone()))?;
        if grad.shape() != cache.normalized.shape() {
            return Err(shape_err(&self.name, format!("upstream gradient shape {:?}", grad.shape())));
        }
        let dy = grad.view().into_dimensionality::<Ix4>().unwrap();
        let xh = cache.normalized.view().into_dimensionality::<Ix4>().unwrap();
        let (n, c, h, w) = dy.dim();
        let count = (n * h * w) as f64;
        let mut dx = ndarray::Array4::<f64>::zeros((n, c, h, w));
        for ch in 0..c {
            let dyc = dy.index_axis(Axis(1), ch);
            let xhc = xh.index_axis(Axis(1), ch);
            let sum_dy = dyc.sum();
            let sum_dy_xh: f64 = ndarray::Zip::from(&dyc).and(&xhc).fold(0.0, |acc, &a, &b| acc + a * b);
            self.gamma.grad[[ch]] += sum_dy_xh;
            self.beta.grad[[ch]] += sum_dy;
            let scale = self.gamma.value[[ch]] * cache.inv_std[ch];
            let mut dxc = dx.index_axis_mut(Axis(1), ch);
            match cache.mode {
                Mode::Train => {
                    let (mdy, mdyx) = (sum_dy / count, sum_dy_xh / count);
                    ndarray::Zip::from(&mut dxc)
                        .and(&dyc)
                        .and(&xhc)
                        .for_each(|d, &g, &x| *d = scale * (g - mdy - x * mdyx));
                }
                Mode::Eval => ndarray::Zip::from(&mut dxc).and(&dyc).for_each(|d, &g| *d = scale * g),
            }
        }
        Ok(dx.into_dyn())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_uniform;

    #[test]
    fn train_mode_output_is_standardized() {
        let mut bn = BatchNorm2d::new("bn", 2);
        let x = init_uniform(&[3, 2, 4, 5], 1, 1, "x") * 3.0 + 7.0;
        let y = bn.forward(&x, Mode::Train).unwrap();
        let y4 = y.into_dimensionality::<Ix4>().unwrap();
        for ch in 0..2 {
            let slab = y4.index_axis(Axis(1), ch);
            assert!(slab.mean().unwrap().abs() < 1e-12);
            assert!((slab.std(0.0) - (1.0f64 / (1.0 + 1e-5 / slab.std(0.0).powi(2))).sqrt()).abs() < 1e-3);
        }
        // first batch seeds the running statistics
        assert_eq!(bn.batches_seen.value[[0]], 1.0);
        let x4 = x.view().into_dimensionality::<Ix4>().unwrap();
        assert!((bn.running_mean.value[[0]] - x4.index_axis(Axis(1), 0).mean().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn momentum_update_after_first_batch() {
        let mut bn = BatchNorm2d::new("bn", 1);
        let ones = Tensor::ones(ndarray::IxDyn(&[2, 1, 1, 2]));
        bn.forward(&(&ones * 2.0), Mode::Train).unwrap();
        bn.forward(&(&ones * 4.0), Mode::Train).unwrap();
        assert!((bn.running_mean.value[[0]] - (0.9 * 2.0 + 0.1 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn eval_mode_is_affine() {
        let mut bn = BatchNorm2d::new("bn", 2);
        bn.running_mean.value = ndarray::arr1(&[0.5, -1.0]).into_dyn();
        bn.running_var.value = ndarray::arr1(&[4.0, 0.25]).into_dyn();
        bn.gamma.value = ndarray::arr1(&[1.5, -2.0]).into_dyn();
        bn.beta.value = ndarray::arr1(&[0.1, 0.3]).into_dyn();
        let x = init_uniform(&[2, 2, 3, 3], 1, 2, "x");
        let (a, b) = (2.5, -0.75);
        let y = bn.forward(&x, Mode::Eval).unwrap();
        let y_affine = bn.forward(&x.mapv(|v| a * v + b), Mode::Eval).unwrap();
        let y1 = bn.forward(&Tensor::ones(x.raw_dim()), Mode::Eval).unwrap();
        let y0 = bn.forward(&Tensor::zeros(x.raw_dim()), Mode::Eval).unwrap();
        // f(a x + b 1) = a f(x) + b f(1) + (1 - a - b) f(0) for an affine f
        let want = &y * a + &y1 * b + &y0 * (1.0 - a - b);
        for (p, q) in y_affine.iter().zip(want.iter()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
