use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{class_auprcs, EvalError};

/// Class index to owning model index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionAssignment {
    pub owners: Vec<usize>,
    pub models: usize,
}

/// For each class, the model with the highest class-wise AUPRC; ties and
/// classes without positives go to the lowest model index.
pub fn select_best_per_class(models: &[Array2<f64>], labels: &Array2<f64>) -> Result<FusionAssignment, EvalError> {
    if models.is_empty() {
        return Err(EvalError::NoModels);
    }
    let scores = models
        .iter()
        .map(|z| class_auprcs(z, labels))
        .collect::<Result<Vec<_>, _>>()?;
    let owners = (0..labels.nrows())
        .map(|c| {
            let mut best = 0;
            for u in 1..models.len() {
                if let (Some(a), Some(b)) = (scores[u][c], scores[best][c]) {
                    if a > b {
                        best = u;
                    }
                }
            }
            best
        })
        .collect();
    Ok(FusionAssignment {
        owners,
        models: models.len(),
    })
}

/// One `[C, N]` binary mask per model with row `c` set in the owner's mask.
pub fn masks_from_assignment(assignment: &FusionAssignment, clips: usize) -> Vec<Array2<f64>> {
    let classes = assignment.owners.len();
    (0..assignment.models)
        .map(|u| {
            let mut m = Array2::zeros((classes, clips));
            for (c, &owner) in assignment.owners.iter().enumerate() {
                if owner == u {
                    m.row_mut(c).fill(1.0);
                }
            }
            m
        })
        .collect()
}

/// `Z = Σ_u Z(u) ⊙ I(u)`. The masks must be binary and give every class row
/// to exactly one model.
pub fn fuse(models: &[Array2<f64>], masks: &[Array2<f64>]) -> Result<Array2<f64>, EvalError> {
    let first = models.first().ok_or(EvalError::NoModels)?;
    if masks.len() != models.len() {
        return Err(EvalError::Shape(format!("{} models but {} masks", models.len(), masks.len())));
    }
    let dim = first.dim();
    for (z, m) in models.iter().zip(masks) {
        if z.dim() != dim || m.dim() != dim {
            return Err(EvalError::Shape(format!(
                "prediction {:?} and mask {:?} vs {dim:?}",
                z.dim(),
                m.dim()
            )));
        }
    }
    for c in 0..dim.0 {
        let mut owners = 0;
        for m in masks {
            let row = m.row(c);
            if row.iter().all(|&v| v == 1.0) {
                owners += 1;
            } else if !row.iter().all(|&v| v == 0.0) {
                return Err(EvalError::Partition(format!("class row {c} is neither all ones nor all zeros")));
            }
        }
        if owners != 1 {
            return Err(EvalError::Partition(format!("class row {c} is owned by {owners} models")));
        }
    }
    let mut out = Array2::zeros(dim);
    for (z, m) in models.iter().zip(masks) {
        out = out + z * m;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn single_model_identity() {
        let z = arr2(&[[0.1, 0.9], [0.4, 0.3]]);
        let mask = Array2::ones((2, 2));
        assert_eq!(fuse(std::slice::from_ref(&z), &[mask]).unwrap(), z);
    }

    #[test]
    fn missing_owner_rejected() {
        let z = arr2(&[[0.1, 0.9], [0.4, 0.3]]);
        let m1 = arr2(&[[1.0, 1.0], [0.0, 0.0]]);
        let m2 = Array2::zeros((2, 2));
        assert!(matches!(fuse(&[z.clone(), z], &[m1, m2]), Err(EvalError::Partition(_))));
    }

    #[test]
    fn identical_models_tie_to_first() {
        let z = arr2(&[[0.1, 0.9], [0.4, 0.3]]);
        let l = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let a = select_best_per_class(&[z.clone(), z], &l).unwrap();
        assert_eq!(a.owners, vec![0, 0]);
    }
}
