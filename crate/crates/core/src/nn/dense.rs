use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3, Axis, Ix2, Ix3, IxDyn};

use super::{init_uniform, join, shape_err, Layer, Mode, NnError, Param, Parameterized, Tensor};

/// Fully connected layer over the last axis, applied identically to every
/// leading index (so `[N, T, D]` inputs are transformed frame by frame).
#[derive(Debug, Clone)]
pub struct Dense {
    name: String,
    inputs: usize,
    outputs: usize,
    /// `[inputs, outputs]`
    pub weight: Param,
    /// `[outputs]`
    pub bias: Param,
    input: Option<Array2<f64>>,
    input_shape: Vec<usize>,
}

impl Dense {
    pub fn new(name: &str, inputs: usize, outputs: usize, seed: u64) -> Self {
        Self::with_blocks(name, &[(inputs, false)], outputs, seed)
    }

    /// Builds a layer whose input is the concatenation of several blocks.
    /// Each `(width, zeroed)` block gets its own random stream and fan-in, so
    /// a block's initial weights do not depend on the blocks after it.
    pub fn with_blocks(name: &str, blocks: &[(usize, bool)], outputs: usize, seed: u64) -> Self {
        let inputs: usize = blocks.iter().map(|b| b.0).sum();
        let mut weight = Tensor::zeros(IxDyn(&[inputs, outputs]));
        let mut row = 0;
        for (i, &(width, zeroed)) in blocks.iter().enumerate() {
            if !zeroed && width > 0 {
                let tag = if i == 0 {
                    join(name, "weight")
                } else {
                    join(name, &format!("weight.block{i}"))
                };
                weight
                    .slice_mut(s![row..row + width, ..])
                    .assign(&init_uniform(&[width, outputs], width, seed, &tag));
            }
            row += width;
        }
        Self {
            name: name.to_string(),
            inputs,
            outputs,
            weight: Param::new(weight),
            bias: Param::zeros(&[outputs]),
            input: None,
            input_shape: Vec::new(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }
}

impl Parameterized for Dense {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        let base = join(prefix, &self.name);
        f(&join(&base, "weight"), &mut self.weight);
        f(&join(&base, "bias"), &mut self.bias);
    }
}

impl Layer for Dense {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let last = x.shape().last().copied().unwrap_or(0);
        if x.ndim() < 1 || last != self.inputs {
            return Err(shape_err(
                &self.name,
                format!("expected trailing width {}, got shape {:?}", self.inputs, x.shape()),
            ));
        }
        let rows = x.len() / self.inputs;
        let flat = x
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((rows, self.inputs))
            .unwrap();
        let w = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let mut y = Array2::<f64>::zeros((rows, self.outputs));
        general_mat_mul(1.0, &flat, &w, 0.0, &mut y);
        let b = self.bias.value.view().into_shape_with_order(self.outputs).unwrap();
        y += &b;
        let mut out_shape = x.shape().to_vec();
        *out_shape.last_mut().unwrap() = self.outputs;
        self.input_shape = x.shape().to_vec();
        self.input = Some(flat);
        Ok(y.into_shape_with_order(IxDyn(&out_shape)).unwrap())
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let x = self.input.as_ref().ok_or_else(|| NnError::NoCache(self.name.clone()))?;
        let rows = x.nrows();
        if grad.len() != rows * self.outputs {
            return Err(shape_err(&self.name, format!("upstream gradient shape {:?}", grad.shape())));
        }
        let dy = grad
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((rows, self.outputs))
            .unwrap();
        let mut wgrad = self.weight.grad.view_mut().into_dimensionality::<Ix2>().unwrap();
        general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut wgrad);
        let mut bgrad = self.bias.grad.view_mut().into_shape_with_order(self.outputs).unwrap();
        bgrad += &dy.sum_axis(Axis(0));
        let w = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let mut dx = Array2::<f64>::zeros((rows, self.inputs));
        general_mat_mul(1.0, &dy, &w.t(), 0.0, &mut dx);
        Ok(dx.into_shape_with_order(IxDyn(&self.input_shape)).unwrap())
    }
}

/// Appends the per-clip vector `context` (`[N, D]`) to every frame of
/// `frames` (`[N, T, M]`), giving `[N, T, M + D]`.
pub fn concat_context(frames: &Tensor, context: &Tensor) -> Result<Tensor, NnError> {
    let f = frames
        .view()
        .into_dimensionality::<Ix3>()
        .map_err(|_| shape_err("concat_context", format!("frames must be [N, T, M], got {:?}", frames.shape())))?;
    let c = context
        .view()
        .into_dimensionality::<Ix2>()
        .map_err(|_| shape_err("concat_context", format!("context must be [N, D], got {:?}", context.shape())))?;
    let (n, t, m) = f.dim();
    if c.nrows() != n {
        return Err(shape_err("concat_context", format!("{n} clips but {} context rows", c.nrows())));
    }
    let d = c.ncols();
    let mut out = Array3::<f64>::zeros((n, t, m + d));
    out.slice_mut(s![.., .., ..m]).assign(&f);
    for i in 0..n {
        for frame in 0..t {
            out.slice_mut(s![i, frame, m..]).assign(&c.row(i));
        }
    }
    Ok(out.into_dyn())
}

/// Splits the gradient of [`concat_context`] into frame and context parts;
/// the context part is summed over frames.
pub fn split_context_grad(grad: &Tensor, frame_width: usize) -> (Tensor, Tensor) {
    let g = grad.view().into_dimensionality::<Ix3>().expect("[N, T, M + D] gradient");
    let frames = g.slice(s![.., .., ..frame_width]).to_owned().into_dyn();
    let context = g.slice(s![.., .., frame_width..]).sum_axis(Axis(1)).into_dyn();
    (frames, context)
}
