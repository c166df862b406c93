//! Detection metrics: IoU, greedy matching, 101-point interpolated AP, mAP50,
//! mAP50-95, precision/recall at the best-F1 operating point and mean±std
//! across runs.

mod aggregate;
mod ap;
mod boxes;
mod eval;
mod matching;
mod predictions;

pub use aggregate::{aggregate_runs, mean_std, MeanStd, RunSummary};
pub use ap::{average_precision, RECALL_POINTS};
pub use boxes::{iou, BoxXYXY};
pub use eval::{evaluate, iou_thresholds, ClassReport, EvalReport, REPORT_COLUMNS};
pub use matching::{match_detections, MatchResult};
pub use predictions::{format_predictions, parse_predictions, read_predictions, write_predictions};

/// A scored, classified box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BoxXYXY,
    pub score: f64,
    pub class_id: usize,
}

/// A ground-truth box with its class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruth {
    pub class_id: usize,
    pub bbox: BoxXYXY,
}
