use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis, Ix2, IxDyn};

use super::activation::sigmoid;
use super::{init_uniform, join, shape_err, Layer, Mode, NnError, Param, Parameterized, Tensor};

/// LSTM cell run over a one-step sequence from a zero initial state, used to
/// encode the context vector. Gate order in the weight columns is
/// input, forget, cell, output. With a zero initial state the recurrent
/// weights and the forget gate have no effect, so only the input projection
/// is stored.
#[derive(Debug, Clone)]
pub struct LstmEncoder {
    name: String,
    inputs: usize,
    hidden: usize,
    /// `[inputs, 4 * hidden]`
    pub w_ih: Param,
    /// `[4 * hidden]`
    pub bias: Param,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    x: Array2<f64>,
    gates: Array2<f64>,
    tanh_c: Array2<f64>,
}

impl LstmEncoder {
    pub fn new(name: &str, inputs: usize, hidden: usize, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            inputs,
            hidden,
            w_ih: Param::new(init_uniform(&[inputs, 4 * hidden], inputs, seed, &join(name, "w_ih"))),
            bias: Param::zeros(&[4 * hidden]),
            cache: None,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }
}

impl Parameterized for LstmEncoder {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        let base = join(prefix, &self.name);
        f(&join(&base, "w_ih"), &mut self.w_ih);
        f(&join(&base, "bias"), &mut self.bias);
    }
}

impl Layer for LstmEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    /// `[N, inputs]` to the final hidden state `[N, hidden]`.
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let x = x
            .view()
            .into_dimensionality::<Ix2>()
            .map_err(|_| shape_err(&self.name, format!("expected [N, D], got {:?}", x.shape())))?;
        if x.ncols() != self.inputs {
            return Err(shape_err(&self.name, format!("expected width {}, got {}", self.inputs, x.ncols())));
        }
        let n = x.nrows();
        let h = self.hidden;
        let w = self.w_ih.value.view().into_dimensionality::<Ix2>().unwrap();
        let mut pre = Array2::<f64>::zeros((n, 4 * h));
        general_mat_mul(1.0, &x, &w, 0.0, &mut pre);
        pre += &self.bias.value.view().into_shape_with_order(4 * h).unwrap();
        let mut gates = pre;
        for mut row in gates.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if (2 * h..3 * h).contains(&j) { v.tanh() } else { sigmoid(*v) };
            }
        }
        // c = i * g, since the previous cell state is zero
        let c = &gates.slice(s![.., 0..h]) * &gates.slice(s![.., 2 * h..3 * h]);
        let tanh_c = c.mapv(f64::tanh);
        let out = &gates.slice(s![.., 3 * h..]) * &tanh_c;
        self.cache = Some(Cache {
            x: x.to_owned(),
            gates,
            tanh_c,
        });
        Ok(out.into_dyn())
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let cache = self.cache.as_ref().ok_or_else(|| NnError::NoCache(self.name.clone()))?;
        let h = self.hidden;
        let n = cache.x.nrows();
        let dh = grad
            .view()
            .into_dimensionality::<Ix2>()
            .map_err(|_| shape_err(&self.name, "upstream gradient rank"))?;
        if dh.dim() != (n, h) {
            return Err(shape_err(&self.name, format!("upstream gradient shape {:?}", grad.shape())));
        }
        let mut dpre = Array2::<f64>::zeros((n, 4 * h));
        for r in 0..n {
            for j in 0..h {
                let (i, g, o) = (cache.gates[[r, j]], cache.gates[[r, 2 * h + j]], cache.gates[[r, 3 * h + j]]);
                let tc = cache.tanh_c[[r, j]];
                let d = dh[[r, j]];
                let dc = d * o * (1.0 - tc * tc);
                dpre[[r, 3 * h + j]] = d * tc * o * (1.0 - o);
                dpre[[r, j]] = dc * g * i * (1.0 - i);
                dpre[[r, 2 * h + j]] = dc * i * (1.0 - g * g);
            }
        }
        let mut wgrad = self.w_ih.grad.view_mut().into_dimensionality::<Ix2>().unwrap();
        general_mat_mul(1.0, &cache.x.t(), &dpre, 1.0, &mut wgrad);
        let mut bgrad = self.bias.grad.view_mut().into_shape_with_order(4 * h).unwrap();
        bgrad += &dpre.sum_axis(Axis(0));
        let w = self.w_ih.value.view().into_dimensionality::<Ix2>().unwrap();
        let mut dx = Array2::<f64>::zeros((n, self.inputs));
        general_mat_mul(1.0, &dpre, &w.t(), 0.0, &mut dx);
        Ok(dx.into_shape_with_order(IxDyn(&[n, self.inputs])).unwrap())
    }
}
