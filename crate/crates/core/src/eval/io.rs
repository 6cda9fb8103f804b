use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{pr_curve, EvalError, MacroAuprc};
use crate::classes::{column_names, CoarseClass, NUM_CLASSES};
use crate::corpus::AnnotationRecord;

/// Per-clip class values (scores or 0/1 labels) stored class-major as
/// `[classes, clips]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub clip_ids: Vec<String>,
    pub values: Array2<f64>,
}

impl ScoreMatrix {
    pub fn new(clip_ids: Vec<String>, values: Array2<f64>) -> Result<Self, EvalError> {
        if values.ncols() != clip_ids.len() {
            return Err(EvalError::Shape(format!(
                "{} clip ids for {} columns",
                clip_ids.len(),
                values.ncols()
            )));
        }
        Ok(Self { clip_ids, values })
    }

    /// Columns reordered to follow `ids`.
    pub fn select(&self, ids: &[String]) -> Result<ScoreMatrix, EvalError> {
        let index: HashMap<&str, usize> = self.clip_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut values = Array2::zeros((self.values.nrows(), ids.len()));
        for (k, id) in ids.iter().enumerate() {
            let &j = index
                .get(id.as_str())
                .ok_or_else(|| EvalError::Shape(format!("clip {id} missing")))?;
            values.column_mut(k).assign(&self.values.column(j));
        }
        Ok(ScoreMatrix {
            clip_ids: ids.to_vec(),
            values,
        })
    }
}

/// 0/1 label matrix in manifest order.
pub fn labels_from_records(records: &[AnnotationRecord]) -> ScoreMatrix {
    let mut values = Array2::zeros((NUM_CLASSES, records.len()));
    for (j, r) in records.iter().enumerate() {
        for c in 0..NUM_CLASSES {
            values[[c, j]] = r.labels[c] as u8 as f64;
        }
    }
    ScoreMatrix {
        clip_ids: records.iter().map(|r| r.clip_id.clone()).collect(),
        values,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> EvalError {
    EvalError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Reads `clip_id` plus one column per class, in the canonical class order.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<ScoreMatrix, EvalError> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let header = reader.headers().map_err(|e| format_err(path, e.to_string()))?.clone();
    let expected: Vec<&str> = std::iter::once("clip_id").chain(column_names()).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(format_err(path, format!("header must be {}", expected.join(","))));
    }
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format_err(path, format!("row {}: {e}", row + 1)))?;
        ids.push(rec[0].to_string());
        for c in 0..NUM_CLASSES {
            let v: f64 = rec[c + 1]
                .trim()
                .parse()
                .map_err(|_| format_err(path, format!("row {}: bad value {:?}", row + 1, &rec[c + 1])))?;
            if !v.is_finite() {
                return Err(format_err(path, format!("row {}: non-finite value", row + 1)));
            }
            flat.push(v);
        }
    }
    let n = ids.len();
    let values = Array2::from_shape_vec((n, NUM_CLASSES), flat).expect("row-major fill").reversed_axes();
    Ok(ScoreMatrix {
        clip_ids: ids,
        values: values.as_standard_layout().into_owned(),
    })
}

pub fn write_matrix_csv(path: impl AsRef<Path>, matrix: &ScoreMatrix) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let header: Vec<&str> = std::iter::once("clip_id").chain(column_names()).collect();
    let io = |e: csv::Error| format_err(path, e.to_string());
    w.write_record(&header).map_err(io)?;
    for (j, id) in matrix.clip_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(matrix.values.column(j).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub positives: usize,
    pub auprc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuprcReport {
    pub macro_auprc: f64,
    pub classes: Vec<ClassScore>,
}

impl AuprcReport {
    pub fn new(result: &MacroAuprc, labels: &Array2<f64>) -> Self {
        let classes = result
            .per_class
            .iter()
            .enumerate()
            .map(|(c, &auprc)| ClassScore {
                class: CoarseClass::from_index(c).map(|k| k.column_name().to_string()).unwrap_or(c.to_string()),
                positives: labels.row(c).iter().filter(|&&v| v >= 0.5).count(),
                auprc,
            })
            .collect();
        Self {
            macro_auprc: result.macro_auprc,
            classes,
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<22} {:>9} {:>8}\n", "class", "positives", "auprc");
        for c in &self.classes {
            let v = c.auprc.map_or("n/a".to_string(), |a| format!("{a:.4}"));
            out.push_str(&format!("{:<22} {:>9} {:>8}\n", c.class, c.positives, v));
        }
        out.push_str(&format!("{:<22} {:>9} {:>8.4}\n", "macro_auprc", "", self.macro_auprc));
        out
    }
}

/// Writes `pr_<class>.csv` (columns `recall,precision`) for every class with
/// positives. Returns the written file names.
pub fn write_pr_curves(dir: impl AsRef<Path>, scores: &Array2<f64>, labels: &Array2<f64>) -> Result<Vec<String>, EvalError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (c, (s, l)) in scores.rows().into_iter().zip(labels.rows()).enumerate() {
        let l: Vec<bool> = l.iter().map(|&v| v >= 0.5).collect();
        let Ok(curve) = pr_curve(&s.to_vec(), &l) else { continue };
        let name = format!(
            "pr_{}.csv",
            CoarseClass::from_index(c).map(|k| k.column_name().to_string()).unwrap_or(c.to_string())
        );
        let mut text = String::from("recall,precision\n");
        for (r, p) in &curve.points {
            text.push_str(&format!("{r},{p}\n"));
        }
        fs::write(dir.join(&name), text)?;
        written.push(name);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_select() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.csv");
        let values = Array2::from_shape_fn((NUM_CLASSES, 3), |(c, j)| (c * 3 + j) as f64 / 37.0);
        let m = ScoreMatrix::new(vec!["a".into(), "b".into(), "c".into()], values).unwrap();
        write_matrix_csv(&path, &m).unwrap();
        let back = read_matrix_csv(&path).unwrap();
        assert_eq!(back, m);
        let picked = back.select(&["c".into(), "a".into()]).unwrap();
        assert_eq!(picked.values.column(0), m.values.column(2));
        assert!(back.select(&["zz".into()]).is_err());
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.csv");
        std::fs::write(&path, "id,a\nx,1\n").unwrap();
        assert!(read_matrix_csv(&path).is_err());
    }
}
