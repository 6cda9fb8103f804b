use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::classes::CoarseClass;

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub class: usize,
    pub count: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistractorRow {
    pub class: usize,
    /// Clips whose only true label is `class`.
    pub single_label_count: usize,
    /// Classes falsely scored `>= τ` on those clips, in class order.
    pub distractors: Vec<Distractor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistractorReport {
    pub tau: f64,
    pub rows: Vec<DistractorRow>,
}

/// For every single-label clip of class `i`, records each class `j != i`
/// with `z_j >= τ` as a distractor of `i`. Matrices are `[C, N]`.
pub fn distractor_analysis(labels: &Array2<f64>, scores: &Array2<f64>, tau: f64) -> Result<DistractorReport, EvalError> {
    if labels.dim() != scores.dim() {
        return Err(EvalError::Shape(format!(
            "labels {:?} vs scores {:?}",
            labels.dim(),
            scores.dim()
        )));
    }
    let classes = labels.nrows();
    let mut singles = vec![0usize; classes];
    let mut counts = vec![vec![0usize; classes]; classes];
    for (l, z) in labels.columns().into_iter().zip(scores.columns()) {
        let active: Vec<usize> = (0..classes).filter(|&c| l[c] >= 0.5).collect();
        if let [i] = active[..] {
            singles[i] += 1;
            for j in (0..classes).filter(|&j| j != i && z[j] >= tau) {
                counts[i][j] += 1;
            }
        }
    }
    let rows = (0..classes)
        .map(|i| DistractorRow {
            class: i,
            single_label_count: singles[i],
            distractors: (0..classes)
                .filter(|&j| counts[i][j] > 0)
                .map(|j| Distractor {
                    class: j,
                    count: counts[i][j],
                    ratio: counts[i][j] as f64 / singles[i] as f64,
                })
                .collect(),
        })
        .collect();
    Ok(DistractorReport { tau, rows })
}

fn label(c: usize) -> String {
    CoarseClass::from_index(c).map(|k| k.abbreviation().to_string()).unwrap_or_else(|| c.to_string())
}

impl DistractorReport {
    /// Aligned text table: one line per true class with its single-label
    /// count and `name count/total` entries.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8} {:>6}  distractors (tau = {})\n", "class", "single", self.tau);
        for row in &self.rows {
            let list: Vec<String> = row
                .distractors
                .iter()
                .map(|d| format!("{} {}/{}", label(d.class), d.count, row.single_label_count))
                .collect();
            out.push_str(&format!(
                "{:<8} {:>6}  {}\n",
                label(row.class),
                row.single_label_count,
                if list.is_empty() { "-".to_string() } else { list.join(", ") }
            ));
        }
        out
    }
}
