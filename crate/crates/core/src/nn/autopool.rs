use ndarray::{Array2, Array3, Ix3, IxDyn};

use super::{join, shape_err, Layer, Mode, NnError, Param, Parameterized, Tensor};

/// Adaptive temporal pooling with one learnable sharpness per class:
///
/// `out[c] = sum_t p[t, c] * softmax_t(alpha[c] * p[t, c])`
///
/// `alpha = 0` is the frame mean; large `alpha` approaches the frame maximum.
#[derive(Debug, Clone)]
pub struct AutoPool {
    name: String,
    /// `[classes]`
    pub alpha: Param,
    cache: Option<(Array3<f64>, Array3<f64>, Array2<f64>)>,
}

impl AutoPool {
    pub fn new(name: &str, classes: usize) -> Self {
        Self {
            name: name.to_string(),
            alpha: Param::new(Tensor::ones(IxDyn(&[classes]))),
            cache: None,
        }
    }
}

impl Parameterized for AutoPool {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(&join(prefix, &self.name), "alpha"), &mut self.alpha);
    }
}

impl Layer for AutoPool {
    fn name(&self) -> &str {
        &self.name
    }

    /// `[N, T, C]` to `[N, C]`.
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let p = x
            .view()
            .into_dimensionality::<Ix3>()
            .map_err(|_| shape_err(&self.name, format!("expected [N, T, C], got {:?}", x.shape())))?;
        let (n, t, c) = p.dim();
        if c != self.alpha.value.len() {
            return Err(shape_err(&self.name, format!("expected {} classes, got {c}", self.alpha.value.len())));
        }
        if t == 0 {
            return Err(shape_err(&self.name, "no frames to pool"));
        }
        let mut weights = Array3::<f64>::zeros((n, t, c));
        let mut out = Array2::<f64>::zeros((n, c));
        for i in 0..n {
            for k in 0..c {
                let a = self.alpha.value[[k]];
                let max = (0..t).map(|f| a * p[[i, f, k]]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for f in 0..t {
                    let e = (a * p[[i, f, k]] - max).exp();
                    weights[[i, f, k]] = e;
                    total += e;
                }
                let mut acc = 0.0;
                for f in 0..t {
                    weights[[i, f, k]] /= total;
                    acc += weights[[i, f, k]] * p[[i, f, k]];
                }
                out[[i, k]] = acc;
            }
        }
        self.cache = Some((p.to_owned(), weights, out.clone()));
        Ok(out.into_dyn())
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let (p, w, out) = self.cache.as_ref().ok_or_else(|| NnError::NoCache(self.name.clone()))?;
        let (n, t, c) = p.dim();
        if grad.shape() != [n, c] {
            return Err(shape_err(&self.name, format!("upstream gradient shape {:?}", grad.shape())));
        }
        let mut dx = Array3::<f64>::zeros((n, t, c));
        for i in 0..n {
            for k in 0..c {
                let g = grad[[i, k]];
                let a = self.alpha.value[[k]];
                let o = out[[i, k]];
                let mut dalpha = 0.0;
                for f in 0..t {
                    let (wf, pf) = (w[[i, f, k]], p[[i, f, k]]);
                    dx[[i, f, k]] = g * wf * (1.0 + a * (pf - o));
                    dalpha += wf * pf * (pf - o);
                }
                self.alpha.grad[[k]] += g * dalpha;
            }
        }
        Ok(dx.into_dyn())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(alpha: f64, p: &[f64]) -> f64 {
        let mut ap = AutoPool::new("ap", 1);
        ap.alpha.value[[0]] = alpha;
        let x = Tensor::from_shape_vec(IxDyn(&[1, p.len(), 1]), p.to_vec()).unwrap();
        ap.forward(&x, Mode::Eval).unwrap()[[0, 0]]
    }

    #[test]
    fn zero_alpha_is_mean() {
        assert!((pool(0.0, &[0.2, 0.9, 0.4]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn large_alpha_is_max() {
        assert!((pool(1000.0, &[0.2, 0.9]) - 0.9).abs() < 1e-3);
    }

    #[test]
    fn unit_alpha_scalar_formula() {
        let (e1, e2) = (0.2f64.exp(), 0.9f64.exp());
        let want = (0.2 * e1 + 0.9 * e2) / (e1 + e2);
        assert!((pool(1.0, &[0.2, 0.9]) - want).abs() < 1e-15);
    }
}
