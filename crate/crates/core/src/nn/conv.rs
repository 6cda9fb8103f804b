//! Same-padded 2-D convolution via im2col and matrix products.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array4, ArrayView2, ArrayViewMut2, Axis, Ix4};

use super::{init_uniform, join, shape_err, Layer, Mode, NnError, Param, Parameterized, Tensor};

/// Square-kernel convolution over `[N, C, H, W]` with stride 1 and "same"
/// zero padding. The kernel size must be odd.
#[derive(Debug, Clone)]
pub struct Conv2d {
    name: String,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    /// `[out, in, k, k]`
    pub weight: Param,
    /// `[out]`
    pub bias: Param,
    /// When false, `backward` skips the input gradient and returns zeros.
    pub input_grad: bool,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, kernel: usize, seed: u64) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        let fan_in = in_channels * kernel * kernel;
        Self {
            name: name.to_string(),
            in_channels,
            out_channels,
            kernel,
            weight: Param::new(init_uniform(
                &[out_channels, in_channels, kernel, kernel],
                fan_in,
                seed,
                &join(name, "weight"),
            )),
            bias: Param::zeros(&[out_channels]),
            input_grad: true,
            input: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

/// Unfolds one `[C, H, W]` image into `[C*k*k, H*W]` columns.
fn im2col(x: &[f64], channels: usize, h: usize, w: usize, k: usize, cols: &mut [f64]) {
    let pad = k / 2;
    let hw = h * w;
    for c in 0..channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let lo = pad.saturating_sub(kx).min(w);
                let hi = (w + pad).saturating_sub(kx).min(w);
                for y in 0..h {
                    let out = &mut dst[y * w..(y + 1) * w];
                    let sy = y + ky;
                    if sy < pad || sy - pad >= h || lo >= hi {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &x[(c * h + sy - pad) * w..(c * h + sy - pad + 1) * w];
                    out[..lo].fill(0.0);
                    out[hi..].fill(0.0);
                    out[lo..hi].copy_from_slice(&src[lo + kx - pad..hi + kx - pad]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds columns back, accumulating into `dx`.
fn col2im(cols: &[f64], channels: usize, h: usize, w: usize, k: usize, dx: &mut [f64]) {
    let pad = k / 2;
    let hw = h * w;
    for c in 0..channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let lo = pad.saturating_sub(kx).min(w);
                let hi = (w + pad).saturating_sub(kx).min(w);
                if lo >= hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y + ky;
                    if sy < pad || sy - pad >= h {
                        continue;
                    }
                    let dst = &mut dx[(c * h + sy - pad) * w..(c * h + sy - pad + 1) * w];
                    for (d, s) in dst[lo + kx - pad..hi + kx - pad].iter_mut().zip(&src[y * w + lo..y * w + hi]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

impl Parameterized for Conv2d {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        let base = join(prefix, &self.name);
        f(&join(&base, "weight"), &mut self.weight);
        f(&join(&base, "bias"), &mut self.bias);
    }
}

impl Layer for Conv2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let x = x
            .view()
            .into_dimensionality::<Ix4>()
            .map_err(|_| shape_err(&self.name, format!("expected [N, C, H, W], got {:?}", x.shape())))?;
        let (n, c, h, w) = x.dim();
        if c != self.in_channels {
            return Err(shape_err(
                &self.name,
                format!("expected {} input channels, got {c}", self.in_channels),
            ));
        }
        let x = x.as_standard_layout().into_owned();
        let hw = h * w;
        let plen = self.patch_len();
        let wmat = self
            .weight
            .value
            .view()
            .into_shape_with_order((self.out_channels, plen))
            .expect("contiguous weight");
        let mut y = Array4::<f64>::zeros((n, self.out_channels, h, w));
        let mut cols = vec![0.0; plen * hw];
        let xs = x.as_slice().expect("standard layout");
        for i in 0..n {
            let image = &xs[i * c * hw..(i + 1) * c * hw];
            let colv = if self.kernel == 1 {
                ArrayView2::from_shape((plen, hw), image).unwrap()
            } else {
                im2col(image, c, h, w, self.kernel, &mut cols);
                ArrayView2::from_shape((plen, hw), &cols).unwrap()
            };
            let mut out = y.index_axis_mut(Axis(0), i).into_shape_with_order((self.out_channels, hw)).unwrap();
            general_mat_mul(1.0, &wmat, &colv, 0.0, &mut out);
            for (mut row, &b) in out.rows_mut().into_iter().zip(self.bias.value.iter()) {
                row += b;
            }
        }
        self.input = Some(x.into_dyn());
        Ok(y.into_dyn())
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let x = self.input.as_ref().ok_or_else(|| NnError::NoCache(self.name.clone()))?;
        let (n, c, h, w) = x.view().into_dimensionality::<Ix4>().unwrap().dim();
        if grad.shape() != [n, self.out_channels, h, w] {
            return Err(shape_err(&self.name, format!("upstream gradient shape {:?}", grad.shape())));
        }
        let grad = grad.as_standard_layout();
        let gs = grad.as_slice().unwrap();
        let xs = x.as_slice().unwrap();
        let hw = h * w;
        let plen = self.patch_len();
        let out = self.out_channels;
        let wmat = self.weight.value.view().into_shape_with_order((out, plen)).unwrap();
        let mut wgrad: ArrayViewMut2<f64> = self.weight.grad.view_mut().into_shape_with_order((out, plen)).unwrap();
        let mut dx = Tensor::zeros(x.raw_dim());
        let mut cols = vec![0.0; plen * hw];
        let mut dcols = ndarray::Array2::<f64>::zeros((plen, hw));
        for i in 0..n {
            let image = &xs[i * c * hw..(i + 1) * c * hw];
            let dy = ArrayView2::from_shape((out, hw), &gs[i * out * hw..(i + 1) * out * hw]).unwrap();
            let colv = if self.kernel == 1 {
                ArrayView2::from_shape((plen, hw), image).unwrap()
            } else {
                im2col(image, c, h, w, self.kernel, &mut cols);
                ArrayView2::from_shape((plen, hw), &cols).unwrap()
            };
            general_mat_mul(1.0, &dy, &colv.t(), 1.0, &mut wgrad);
            for (b, row) in self.bias.grad.iter_mut().zip(dy.rows()) {
                *b += row.sum();
            }
            if self.input_grad {
                general_mat_mul(1.0, &wmat.t(), &dy, 0.0, &mut dcols);
                let dxs = &mut dx.as_slice_mut().unwrap()[i * c * hw..(i + 1) * c * hw];
                if self.kernel == 1 {
                    for (d, s) in dxs.iter_mut().zip(dcols.iter()) {
                        *d += s;
                    }
                } else {
                    col2im(dcols.as_slice().unwrap(), c, h, w, self.kernel, dxs);
                }
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    /// Direct 4-deep loop convolution.
    fn naive(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
        let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (o, k) = (weight.shape()[0], weight.shape()[2]);
        let pad = (k / 2) as isize;
        let mut y = Tensor::zeros(IxDyn(&[n, o, h, w]));
        for i in 0..n {
            for oc in 0..o {
                for yy in 0..h {
                    for xx in 0..w {
                        let mut acc = bias[[oc]];
                        for ic in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = yy as isize + ky as isize - pad;
                                    let sx = xx as isize + kx as isize - pad;
                                    if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                        acc += weight[[oc, ic, ky, kx]] * x[[i, ic, sy as usize, sx as usize]];
                                    }
                                }
                            }
                        }
                        y[[i, oc, yy, xx]] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn matches_naive_convolution() {
        for (k, h, w) in [(3, 5, 4), (1, 3, 3), (3, 1, 6), (3, 2, 1)] {
            let mut conv = Conv2d::new("c", 2, 3, k, 4);
            conv.bias.value = init_uniform(&[3], 1, 9, "b");
            let x = init_uniform(&[2, 2, h, w], 1, 5, "x");
            let y = conv.forward(&x, Mode::Train).unwrap();
            let want = naive(&x, &conv.weight.value, &conv.bias.value);
            for (a, b) in y.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrong_channels_names_layer() {
        let mut conv = Conv2d::new("cnn.block1.conv1", 1, 2, 3, 0);
        let err = conv.forward(&Tensor::zeros(IxDyn(&[1, 3, 4, 4])), Mode::Train).unwrap_err();
        assert!(err.to_string().contains("cnn.block1.conv1"));
    }
}
