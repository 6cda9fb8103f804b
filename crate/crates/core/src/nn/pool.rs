use ndarray::{Array3, Array4, Ix3, Ix4};

use super::{shape_err, Layer, Mode, NnError, Param, Parameterized, Tensor};

/// Non-overlapping average pooling with floor semantics: trailing rows or
/// columns that do not fill a window are dropped.
#[derive(Debug, Clone)]
pub struct AvgPool2d {
    name: String,
    pub window: (usize, usize),
    input_shape: Option<Vec<usize>>,
}

impl AvgPool2d {
    pub fn new(name: &str, window: (usize, usize)) -> Self {
        assert!(window.0 > 0 && window.1 > 0);
        Self {
            name: name.to_string(),
            window,
            input_shape: None,
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (h / self.window.0, w / self.window.1)
    }
}

impl Parameterized for AvgPool2d {
    fn visit_params(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param)) {}
}

impl Layer for AvgPool2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let x4 = x
            .view()
            .into_dimensionality::<Ix4>()
            .map_err(|_| shape_err(&self.name, format!("expected [N, C, H, W], got {:?}", x.shape())))?;
        let (n, c, h, w) = x4.dim();
        let (ph, pw) = self.window;
        let (oh, ow) = self.output_size(h, w);
        if oh == 0 || ow == 0 {
            return Err(shape_err(
                &self.name,
                format!("{h}x{w} input is smaller than the {ph}x{pw} window"),
            ));
        }
        self.input_shape = Some(x.shape().to_vec());
        if (ph, pw) == (1, 1) {
            return Ok(x.clone());
        }
        let scale = 1.0 / (ph * pw) as f64;
        let mut y = Array4::<f64>::zeros((n, c, oh, ow));
        for ((i, ch, oy, ox), out) in y.indexed_iter_mut() {
            let mut acc = 0.0;
            for dy in 0..ph {
                for dx in 0..pw {
                    acc += x4[[i, ch, oy * ph + dy, ox * pw + dx]];
                }
            }
            *out = acc * scale;
        }
        Ok(y.into_dyn())
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let shape = self.input_shape.as_ref().ok_or_else(|| NnError::NoCache(self.name.clone()))?;
        let (ph, pw) = self.window;
        if (ph, pw) == (1, 1) {
            return Ok(grad.clone());
        }
        let g = grad
            .view()
            .into_dimensionality::<Ix4>()
            .map_err(|_| shape_err(&self.name, "upstream gradient rank"))?;
        let scale = 1.0 / (ph * pw) as f64;
        let mut dx = Array4::<f64>::zeros((shape[0], shape[1], shape[2], shape[3]));
        for ((i, ch, oy, ox), &gv) in g.indexed_iter() {
            for dy in 0..ph {
                for dxx in 0..pw {
                    dx[[i, ch, oy * ph + dy, ox * pw + dxx]] = gv * scale;
                }
            }
        }
        Ok(dx.into_dyn())
    }
}

/// Averages `[N, C, T, F]` over frequency and moves channels last: `[N, T, C]`.
#[derive(Debug, Clone)]
pub struct FreqMean {
    name: String,
    bins: Option<usize>,
}

impl FreqMean {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            bins: None,
        }
    }
}

impl Parameterized for FreqMean {
    fn visit_params(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param)) {}
}

impl Layer for FreqMean {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let x4 = x
            .view()
            .into_dimensionality::<Ix4>()
            .map_err(|_| shape_err(&self.name, format!("expected [N, C, T, F], got {:?}", x.shape())))?;
        let (n, c, t, f) = x4.dim();
        if f == 0 {
            return Err(shape_err(&self.name, "no frequency bins"));
        }
        let mut y = Array3::<f64>::zeros((n, t, c));
        for ((i, frame, ch), out) in y.indexed_iter_mut() {
            *out = (0..f).map(|k| x4[[i, ch, frame, k]]).sum::<f64>() / f as f64;
        }
        self.bins = Some(f);
        Ok(y.into_dyn())
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let f = self.bins.ok_or_else(|| NnError::NoCache(self.name.clone()))?;
        let g = grad
            .view()
            .into_dimensionality::<Ix3>()
            .map_err(|_| shape_err(&self.name, "upstream gradient rank"))?;
        let (n, t, c) = g.dim();
        let mut dx = Array4::<f64>::zeros((n, c, t, f));
        for ((i, frame, ch), &gv) in g.indexed_iter() {
            for k in 0..f {
                dx[[i, ch, frame, k]] = gv / f as f64;
            }
        }
        Ok(dx.into_dyn())
    }
}
