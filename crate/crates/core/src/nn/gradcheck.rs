//! Finite-difference verification of analytic gradients.

use ndarray::{IxDyn, Zip};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Layer, Mode, Model, NnError, Parameterized, Tensor};

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for [`relative_error`], above the round-off noise of a
/// central difference at [`FD_STEP`] for losses of order one.
pub const RELATIVE_FLOOR: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-5)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

fn probe(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Uniform::new(-1.0, 1.0).expect("bounds");
    Tensor::from_shape_simple_fn(IxDyn(shape), || d.sample(&mut rng))
}

fn weighted_sum(y: &Tensor, r: &Tensor) -> f64 {
    Zip::from(y).and(r).fold(0.0, |acc, &a, &b| acc + a * b)
}

fn param_len(target: &mut dyn Parameterized) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    target.visit_params("", &mut |name, p| {
        if p.trainable {
            out.push((name.to_string(), p.value.len()))
        }
    });
    out
}

fn nudge(target: &mut dyn Parameterized, name: &str, index: usize, delta: f64) {
    target.visit_params("", &mut |n, p| {
        if n == name {
            p.value.as_slice_memory_order_mut().expect("contiguous parameter")[index] += delta;
        }
    });
}

fn analytic_grad(target: &mut dyn Parameterized, name: &str, index: usize) -> f64 {
    let mut g = 0.0;
    target.visit_params("", &mut |n, p| {
        if n == name {
            g = p.grad.as_slice_memory_order().expect("contiguous gradient")[index];
        }
    });
    g
}

/// Compares analytic and central-difference gradients of the scalar
/// `sum(layer(x) * r)` for a fixed random `r`, over the input and every
/// trainable parameter. Returns the maximum relative error.
pub fn check_layer(layer: &mut dyn Layer, x: &Tensor, mode: Mode, seed: u64) -> Result<f64, NnError> {
    let y = layer.forward(x, mode)?;
    let r = probe(y.shape(), seed);
    layer.zero_grads();
    let dx = layer.backward(&r)?;
    let mut worst = 0.0f64;

    let mut xp = x.as_standard_layout().into_owned();
    let dx = dx.as_standard_layout().into_owned();
    for i in 0..x.len() {
        let orig = xp.as_slice().unwrap()[i];
        xp.as_slice_mut().unwrap()[i] = orig + FD_STEP;
        let up = weighted_sum(&layer.forward(&xp, mode)?, &r);
        xp.as_slice_mut().unwrap()[i] = orig - FD_STEP;
        let down = weighted_sum(&layer.forward(&xp, mode)?, &r);
        xp.as_slice_mut().unwrap()[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(dx.as_slice().unwrap()[i], numeric));
    }

    for (name, len) in param_len(layer) {
        for i in 0..len {
            nudge(layer, &name, i, FD_STEP);
            let up = weighted_sum(&layer.forward(x, mode)?, &r);
            nudge(layer, &name, i, -2.0 * FD_STEP);
            let down = weighted_sum(&layer.forward(x, mode)?, &r);
            nudge(layer, &name, i, FD_STEP);
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic_grad(layer, &name, i), numeric));
        }
    }
    Ok(worst)
}

/// Same comparison for a whole model over every trainable parameter and,
/// when present, the context input.
pub fn check_model(
    model: &mut Model,
    features: &Tensor,
    context: Option<&Tensor>,
    mode: Mode,
    seed: u64,
) -> Result<f64, NnError> {
    let z = model.forward(features, context, mode)?;
    let r = probe(z.shape(), seed);
    model.zero_grads();
    let (_, dctx) = model.backward(&r)?;
    let mut worst = 0.0f64;

    for (name, len) in param_len(model) {
        for i in 0..len {
            nudge(model, &name, i, FD_STEP);
            let up = weighted_sum(&model.forward(features, context, mode)?, &r);
            nudge(model, &name, i, -2.0 * FD_STEP);
            let down = weighted_sum(&model.forward(features, context, mode)?, &r);
            nudge(model, &name, i, FD_STEP);
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic_grad(model, &name, i), numeric));
        }
    }

    if let (Some(ctx), Some(dctx)) = (context, dctx) {
        let mut cp = ctx.as_standard_layout().into_owned();
        let dctx = dctx.as_standard_layout().into_owned();
        for i in 0..ctx.len() {
            let orig = cp.as_slice().unwrap()[i];
            cp.as_slice_mut().unwrap()[i] = orig + FD_STEP;
            let up = weighted_sum(&model.forward(features, Some(&cp), mode)?, &r);
            cp.as_slice_mut().unwrap()[i] = orig - FD_STEP;
            let down = weighted_sum(&model.forward(features, Some(&cp), mode)?, &r);
            cp.as_slice_mut().unwrap()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(dctx.as_slice().unwrap()[i], numeric));
        }
    }
    Ok(worst)
}
