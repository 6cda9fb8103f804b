use std::collections::BTreeMap;

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{NnError, Parameterized, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam with moment estimates kept per parameter name.
/// Buffers (non-trainable entries) are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently accumulated in `model`.
    pub fn step(&mut self, model: &mut dyn Parameterized) -> Result<(), NnError> {
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let mut error = None;
        let moments = &mut self.moments;
        model.visit_params("", &mut |name, p| {
            if !p.trainable || error.is_some() {
                return;
            }
            if p.grad.shape() != p.value.shape() {
                error = Some(NnError::Parameter {
                    name: name.to_string(),
                    message: format!("gradient shape {:?} vs value {:?}", p.grad.shape(), p.value.shape()),
                });
                return;
            }
            let (m, v) = moments
                .entry(name.to_string())
                .or_insert_with(|| (Tensor::zeros(p.value.raw_dim()), Tensor::zeros(p.value.raw_dim())));
            if m.shape() != p.value.shape() {
                error = Some(NnError::Parameter {
                    name: name.to_string(),
                    message: format!("optimizer state shape {:?} vs value {:?}", m.shape(), p.value.shape()),
                });
                return;
            }
            Zip::from(&mut p.value).and(&p.grad).and(m).and(v).for_each(|w, &g, m, v| {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                *w -= c.lr * (*m / bc1) / ((*v / bc2).sqrt() + c.epsilon);
            });
        });
        match error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;
    use ndarray::IxDyn;

    struct Scalar(Param);

    impl Parameterized for Scalar {
        fn visit_params(&mut self, _: &str, f: &mut dyn FnMut(&str, &mut Param)) {
            f("w", &mut self.0)
        }
    }

    fn scalar(v: f64, g: f64) -> Scalar {
        let mut p = Param::new(Tensor::from_elem(IxDyn(&[1]), v));
        p.grad[[0]] = g;
        Scalar(p)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = scalar(0.3, 1.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut s).unwrap();
        // m_hat = 1, v_hat = 1
        let want = 0.3 - 0.001 * 1.0 / (1.0 + 1e-8);
        assert!((s.0.value[[0]] - want).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut s = scalar(-1.25, 0.0);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut s).unwrap();
        }
        assert_eq!(s.0.value[[0]], -1.25);
    }

    #[test]
    fn buffers_untouched() {
        let mut p = Param::buffer(Tensor::from_elem(IxDyn(&[2]), 4.0));
        p.grad.fill(1.0);
        let mut s = Scalar(p);
        Adam::new(AdamConfig::default()).step(&mut s).unwrap();
        assert!(s.0.value.iter().all(|&v| v == 4.0));
    }
}
