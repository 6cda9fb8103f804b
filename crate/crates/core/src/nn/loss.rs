use ndarray::Zip;

use super::{NnError, Tensor};

pub const BCE_CLAMP: f64 = 1e-7;

/// Mean binary cross entropy over every element, with scores clamped to
/// `[1e-7, 1 - 1e-7]`. Targets may be fractional. Returns the loss and its
/// gradient with respect to `z` (zero where the clamp is active).
pub fn bce_loss(z: &Tensor, y: &Tensor) -> Result<(f64, Tensor), NnError> {
    if z.shape() != y.shape() {
        return Err(NnError::Shape {
            layer: "bce_loss".into(),
            message: format!("scores {:?} vs targets {:?}", z.shape(), y.shape()),
        });
    }
    let count = z.len().max(1) as f64;
    let mut total = 0.0;
    let mut grad = Tensor::zeros(z.raw_dim());
    Zip::from(&mut grad).and(z).and(y).for_each(|g, &zv, &yv| {
        let zc = zv.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        total -= yv * zc.ln() + (1.0 - yv) * (1.0 - zc).ln();
        if zv > BCE_CLAMP && zv < 1.0 - BCE_CLAMP {
            *g = (zc - yv) / (zc * (1.0 - zc)) / count;
        }
    });
    Ok((total / count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn half_scores_give_ln2() {
        let z = Tensor::from_elem(IxDyn(&[3, 8]), 0.5);
        let y = Tensor::from_shape_fn(IxDyn(&[3, 8]), |d| ((d[0] + d[1]) % 2) as f64);
        let (l, _) = bce_loss(&z, &y).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_bound() {
        let y = Tensor::from_shape_fn(IxDyn(&[2, 8]), |d| (d[1] % 3 == 0) as u8 as f64);
        let (l, g) = bce_loss(&y, &y).unwrap();
        assert!(l <= -(1.0 - BCE_CLAMP).ln() + 1e-18);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_shapes() {
        let z = Tensor::zeros(IxDyn(&[2, 8]));
        let y = Tensor::zeros(IxDyn(&[2, 7]));
        assert!(bce_loss(&z, &y).is_err());
    }
}
