use ndarray::{Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixupConfig {
    /// Beta distribution parameter for both shape arguments.
    pub alpha: f64,
    /// Draw one λ per sample; otherwise one per batch.
    pub per_sample: bool,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            per_sample: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch {
    pub features: Tensor,
    pub contexts: Option<Tensor>,
    pub labels: Tensor,
}

fn check_rows(what: &str, t: &Tensor, n: usize) -> Result<(), NnError> {
    if t.ndim() == 0 || t.shape()[0] != n {
        return Err(NnError::Shape {
            layer: "mixup".into(),
            message: format!("{what} has shape {:?}, expected {n} rows", t.shape()),
        });
    }
    Ok(())
}

fn mix(t: &Tensor, partners: &[usize], lambdas: &[f64]) -> Tensor {
    let mut out = t.clone();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let lam = lambdas[i];
        let other = t.index_axis(Axis(0), partners[i]);
        Zip::from(&mut row).and(&other).for_each(|a, &b| *a = lam * *a + (1.0 - lam) * b);
    }
    out
}

/// Mixes sample `i` with sample `partners[i]` using weight `lambdas[i]` on
/// the first: `x' = λ x_i + (1 - λ) x_j`, identically for features,
/// contexts and labels.
pub fn mixup_with(
    features: &Tensor,
    contexts: Option<&Tensor>,
    labels: &Tensor,
    partners: &[usize],
    lambdas: &[f64],
) -> Result<MixedBatch, NnError> {
    let n = partners.len();
    check_rows("features", features, n)?;
    check_rows("labels", labels, n)?;
    if let Some(c) = contexts {
        check_rows("contexts", c, n)?;
    }
    if lambdas.len() != n || partners.iter().any(|&j| j >= n) {
        return Err(NnError::Shape {
            layer: "mixup".into(),
            message: "partner or weight list does not match the batch".into(),
        });
    }
    Ok(MixedBatch {
        features: mix(features, partners, lambdas),
        contexts: contexts.map(|c| mix(c, partners, lambdas)),
        labels: mix(labels, partners, lambdas),
    })
}

/// Partners from a random permutation of `0..n` and λ from `Beta(α, α)`.
pub fn draw_pairs<R: Rng + ?Sized>(n: usize, config: &MixupConfig, rng: &mut R) -> Result<(Vec<usize>, Vec<f64>), NnError> {
    let beta = Beta::new(config.alpha, config.alpha).map_err(|e| NnError::Parameter {
        name: "mixup.alpha".into(),
        message: e.to_string(),
    })?;
    let mut partners: Vec<usize> = (0..n).collect();
    partners.shuffle(rng);
    let lambdas: Vec<f64> = if config.per_sample {
        (0..n).map(|_| beta.sample(rng)).collect()
    } else {
        vec![beta.sample(rng); n]
    };
    Ok((partners, lambdas))
}

/// Mixes the batch with pairs from [`draw_pairs`].
pub fn mixup_batch<R: Rng + ?Sized>(
    features: &Tensor,
    contexts: Option<&Tensor>,
    labels: &Tensor,
    config: &MixupConfig,
    rng: &mut R,
) -> Result<MixedBatch, NnError> {
    let n = features.shape().first().copied().unwrap_or(0);
    if n < 2 {
        log::warn!("mixup skipped for a batch of {n}");
        return Ok(MixedBatch {
            features: features.clone(),
            contexts: contexts.cloned(),
            labels: labels.clone(),
        });
    }
    let (partners, lambdas) = draw_pairs(n, config, rng)?;
    mixup_with(features, contexts, labels, &partners, &lambdas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn midpoint_labels() {
        let x = Tensor::zeros(IxDyn(&[2, 3]));
        let mut y = Tensor::zeros(IxDyn(&[2, 8]));
        y[[0, 0]] = 1.0;
        y[[1, 1]] = 1.0;
        let m = mixup_with(&x, None, &y, &[1, 0], &[0.5, 0.5]).unwrap();
        let row: Vec<f64> = m.labels.index_axis(Axis(0), 0).iter().copied().collect();
        assert_eq!(row, vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_sample_unchanged() {
        let x = Tensor::from_elem(IxDyn(&[1, 4]), 2.0);
        let y = Tensor::from_elem(IxDyn(&[1, 8]), 1.0);
        let mut rng = rand::rng();
        let m = mixup_batch(&x, None, &y, &MixupConfig::default(), &mut rng).unwrap();
        assert_eq!(m.features, x);
        assert_eq!(m.labels, y);
    }
}
