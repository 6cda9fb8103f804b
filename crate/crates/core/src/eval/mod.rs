//! Precision-recall metrics, per-class model fusion and distractor analysis.

mod distractor;
mod fusion;
mod io;
mod metrics;

use thiserror::Error;

pub use distractor::{distractor_analysis, Distractor, DistractorReport, DistractorRow, DEFAULT_TAU};
pub use fusion::{fuse, masks_from_assignment, select_best_per_class, FusionAssignment};
pub use io::{
    labels_from_records, read_matrix_csv, write_matrix_csv, write_pr_curves, AuprcReport, ClassScore, ScoreMatrix,
};
pub use metrics::{auprc, class_auprcs, macro_auprc, pr_curve, MacroAuprc, PrCurve};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class {class}: no positive labels, AUPRC undefined")]
    NoPositives { class: String },
    #[error("every class lacks positive labels")]
    AllEmpty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("masks do not partition the classes: {0}")]
    Partition(String),
    #[error("no models to fuse")]
    NoModels,
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
