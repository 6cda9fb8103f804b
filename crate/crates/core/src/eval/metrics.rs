use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::classes::CoarseClass;

/// Precision-recall pairs swept from the highest score threshold down,
/// starting at `(recall 0, precision 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// `(recall, precision)`; entry `k > 0` corresponds to `thresholds[k - 1]`.
    pub points: Vec<(f64, f64)>,
    /// Distinct scores in descending order.
    pub thresholds: Vec<f64>,
    pub positives: usize,
    pub total: usize,
}

/// Curve with one point per distinct score: a clip counts as predicted
/// positive at threshold `τ` when its score is `>= τ`.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Shape(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(EvalError::NoPositives { class: "?".into() });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 1.0)];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1
            } else {
                fp += 1
            }
            i += 1;
        }
        thresholds.push(s);
        points.push((tp as f64 / positives as f64, tp as f64 / (tp + fp) as f64));
    }
    Ok(PrCurve {
        points,
        thresholds,
        positives,
        total: scores.len(),
    })
}

/// Step-wise area: `Σ (R_n - R_{n-1}) · P_n` (average precision).
pub fn auprc(curve: &PrCurve) -> f64 {
    curve.points.windows(2).map(|w| (w[1].0 - w[0].0) * w[1].1).sum()
}

/// AUPRC per class (rows of `[C, N]` matrices); `None` for classes without
/// positive labels.
pub fn class_auprcs(scores: &Array2<f64>, labels: &Array2<f64>) -> Result<Vec<Option<f64>>, EvalError> {
    if scores.dim() != labels.dim() {
        return Err(EvalError::Shape(format!(
            "scores {:?} vs labels {:?}",
            scores.dim(),
            labels.dim()
        )));
    }
    scores
        .rows()
        .into_iter()
        .zip(labels.rows())
        .map(|(s, l)| {
            let l: Vec<bool> = l.iter().map(|&v| v >= 0.5).collect();
            match pr_curve(&s.to_vec(), &l) {
                Ok(c) => Ok(Some(auprc(&c))),
                Err(EvalError::NoPositives { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAuprc {
    pub per_class: Vec<Option<f64>>,
    pub macro_auprc: f64,
}

/// Unweighted mean of the class-wise AUPRCs over classes that have at least
/// one positive; the others are skipped with a warning.
pub fn macro_auprc(scores: &Array2<f64>, labels: &Array2<f64>) -> Result<MacroAuprc, EvalError> {
    let per_class = class_auprcs(scores, labels)?;
    let mut sum = 0.0;
    let mut n = 0;
    for (c, v) in per_class.iter().enumerate() {
        match v {
            Some(a) => {
                sum += a;
                n += 1;
            }
            None => {
                let name = CoarseClass::from_index(c).map(|k| k.column_name().to_string()).unwrap_or(c.to_string());
                log::warn!("class {name} has no positive labels; excluded from macro-auprc");
            }
        }
    }
    if n == 0 {
        return Err(EvalError::AllEmpty);
    }
    Ok(MacroAuprc {
        per_class,
        macro_auprc: sum / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let c = pr_curve(&[0.9, 0.1], &[true, false]).unwrap();
        assert!(c.points.contains(&(1.0, 1.0)));
        assert_eq!(auprc(&c), 1.0);
    }

    #[test]
    fn reversed_pair() {
        let c = pr_curve(&[0.9, 0.1], &[false, true]).unwrap();
        assert_eq!(c.points, vec![(0.0, 1.0), (0.0, 0.0), (1.0, 0.5)]);
        assert_eq!(auprc(&c), 0.5);
    }

    #[test]
    fn all_positive() {
        let c = pr_curve(&[0.3, 0.7, 0.7, 0.1], &[true; 4]).unwrap();
        assert!(c.points.iter().all(|p| p.1 == 1.0));
    }

    #[test]
    fn no_positives() {
        assert!(matches!(pr_curve(&[0.5], &[false]), Err(EvalError::NoPositives { .. })));
    }

    #[test]
    fn macro_mean_skips_empty() {
        let z = ndarray::arr2(&[[0.9, 0.1], [0.9, 0.1], [0.2, 0.4]]);
        let l = ndarray::arr2(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
        let m = macro_auprc(&z, &l).unwrap();
        assert_eq!(m.per_class, vec![Some(1.0), Some(0.5), None]);
        assert_eq!(m.macro_auprc, 0.75);
    }

    #[test]
    fn all_empty_is_error() {
        let z = Array2::<f64>::zeros((2, 3));
        assert!(matches!(macro_auprc(&z, &z), Err(EvalError::AllEmpty)));
    }
}
