use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::ap::average_precision;
use super::{match_detections, Detection, GroundTruth};
use crate::error::{Error, Result};

pub const REPORT_COLUMNS: [&str; 5] = ["precision", "recall", "map50", "map50_95", "mean_iou"];

/// IoU thresholds 0.50, 0.55, …, 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassReport {
    pub class_id: usize,
    pub n_gt: usize,
    pub ap50: f64,
    pub ap50_95: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub map50: f64,
    pub map50_95: f64,
    pub mean_iou: f64,
    /// Classes with at least one ground-truth box, ascending by id.
    pub per_class: Vec<ClassReport>,
}

impl EvalReport {
    pub fn values(&self) -> [f64; 5] {
        [self.precision, self.recall, self.map50, self.map50_95, self.mean_iou]
    }

    pub fn to_csv(&self) -> String {
        let mut s = REPORT_COLUMNS.join(",");
        s.push('\n');
        let row: Vec<String> = self.values().iter().map(|v| format!("{v:.6}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
        s
    }

    /// Aligned text table, values in percent.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>10} {:>10} {:>10} {:>10} {:>10}", "Precision", "Recall", "mAP50", "mAP50-95", "IoU");
        let v = self.values();
        let _ = writeln!(
            s,
            "{:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2}",
            100.0 * v[0],
            100.0 * v[1],
            100.0 * v[2],
            100.0 * v[3],
            100.0 * v[4]
        );
        for c in &self.per_class {
            let _ = writeln!(
                s,
                "  class {}: {} gt, AP50 {:.2}, AP50-95 {:.2}",
                c.class_id,
                c.n_gt,
                100.0 * c.ap50,
                100.0 * c.ap50_95
            );
        }
        s
    }
}

/// Evaluates per-image detections against per-image ground truth.
///
/// mAP is averaged over classes that have ground truth. Precision and recall
/// are class means at the score cutoff that maximizes mean F1 on the IoU-0.5
/// curve (both 0 without detections). `mean_iou` averages the IoU of the
/// true-positive matches at 0.5.
pub fn evaluate(dets: &[Vec<Detection>], gts: &[Vec<GroundTruth>]) -> Result<EvalReport> {
    if dets.len() != gts.len() {
        return Err(Error::EvalUndefined(format!("{} prediction sets for {} images", dets.len(), gts.len())));
    }
    let mut n_gt: BTreeMap<usize, usize> = BTreeMap::new();
    for g in gts.iter().flatten() {
        *n_gt.entry(g.class_id).or_default() += 1;
    }
    if n_gt.is_empty() {
        return Err(Error::EvalUndefined("no ground-truth boxes".into()));
    }

    let thresholds = iou_thresholds();
    // ap[class][threshold]
    let mut ap: BTreeMap<usize, Vec<f64>> = n_gt.keys().map(|&c| (c, Vec::new())).collect();
    let mut scored50: BTreeMap<usize, Vec<(f64, bool)>> = BTreeMap::new();
    let mut tp_ious = Vec::new();
    for (ti, &t) in thresholds.iter().enumerate() {
        let mut scored: BTreeMap<usize, Vec<(f64, bool)>> = n_gt.keys().map(|&c| (c, Vec::new())).collect();
        for (d, g) in dets.iter().zip(gts) {
            let m = match_detections(d, g, t);
            for (det, hit) in d.iter().zip(&m.matches) {
                if let Some(list) = scored.get_mut(&det.class_id) {
                    list.push((det.score, hit.is_some()));
                }
                if ti == 0 {
                    if let Some((_, v)) = hit {
                        tp_ious.push(*v);
                    }
                }
            }
        }
        for (c, list) in &scored {
            ap.get_mut(c).expect("class present").push(average_precision(list, n_gt[c]).expect("class has gt"));
        }
        if ti == 0 {
            scored50 = scored;
        }
    }

    let per_class: Vec<ClassReport> = n_gt
        .iter()
        .map(|(&c, &n)| {
            let a = &ap[&c];
            ClassReport { class_id: c, n_gt: n, ap50: a[0], ap50_95: a.iter().sum::<f64>() / a.len() as f64 }
        })
        .collect();
    let k = per_class.len() as f64;
    let map50 = per_class.iter().map(|c| c.ap50).sum::<f64>() / k;
    let map50_95 = per_class.iter().map(|c| c.ap50_95).sum::<f64>() / k;
    let (precision, recall) = best_f1_operating_point(&scored50, &n_gt);
    let mean_iou = if tp_ious.is_empty() { 0.0 } else { tp_ious.iter().sum::<f64>() / tp_ious.len() as f64 };
    Ok(EvalReport { precision, recall, map50, map50_95, mean_iou, per_class })
}

fn best_f1_operating_point(scored: &BTreeMap<usize, Vec<(f64, bool)>>, n_gt: &BTreeMap<usize, usize>) -> (f64, f64) {
    let mut cutoffs: Vec<f64> = scored.values().flatten().map(|&(s, _)| s).collect();
    cutoffs.sort_by(|a, b| b.total_cmp(a));
    cutoffs.dedup();
    // per class: scores descending with cumulative tp
    let curves: Vec<(Vec<f64>, Vec<usize>, usize)> = scored
        .iter()
        .map(|(c, list)| {
            let mut sorted = list.clone();
            sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut tp = 0;
            let cum: Vec<usize> = sorted
                .iter()
                .map(|&(_, hit)| {
                    tp += hit as usize;
                    tp
                })
                .collect();
            (sorted.iter().map(|&(s, _)| s).collect(), cum, n_gt[c])
        })
        .collect();
    let k = curves.len() as f64;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for &s in &cutoffs {
        let (mut f1, mut p, mut r) = (0.0, 0.0, 0.0);
        for (scores, cum, n) in &curves {
            let kept = scores.partition_point(|&v| v >= s);
            let (pc, rc) = if kept == 0 {
                (0.0, 0.0)
            } else {
                let tp = cum[kept - 1] as f64;
                (tp / kept as f64, tp / *n as f64)
            };
            let fc = if pc + rc > 0.0 { 2.0 * pc * rc / (pc + rc) } else { 0.0 };
            f1 += fc / k;
            p += pc / k;
            r += rc / k;
        }
        if f1 > best.0 {
            best = (f1, p, r);
        }
    }
    if best.0.is_finite() {
        (best.1, best.2)
    } else {
        (0.0, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::BoxXYXY;

    fn gt(c: usize, b: BoxXYXY) -> GroundTruth {
        GroundTruth { class_id: c, bbox: b }
    }

    #[test]
    fn perfect_detections() {
        let boxes = [BoxXYXY::new(0., 0., 10., 10.), BoxXYXY::new(20., 20., 40., 30.)];
        let gts = vec![vec![gt(0, boxes[0]), gt(1, boxes[1])], vec![gt(0, boxes[1])]];
        let dets: Vec<Vec<Detection>> = gts
            .iter()
            .map(|g| g.iter().map(|g| Detection { bbox: g.bbox, score: 0.9, class_id: g.class_id }).collect())
            .collect();
        let r = evaluate(&dets, &gts).unwrap();
        assert_eq!(r.values(), [1.0; 5]);
    }

    #[test]
    fn no_detections() {
        let gts = vec![vec![gt(0, BoxXYXY::new(0., 0., 10., 10.))]];
        let r = evaluate(&[vec![]], &gts).unwrap();
        assert_eq!(r.values(), [0.0; 5]);
    }

    #[test]
    fn empty_ground_truth_is_undefined() {
        assert!(matches!(evaluate(&[vec![]], &[vec![]]), Err(Error::EvalUndefined(_))));
    }

    #[test]
    fn csv_schema() {
        let gts = vec![vec![gt(0, BoxXYXY::new(0., 0., 10., 10.))]];
        let csv = evaluate(&[vec![]], &gts).unwrap().to_csv();
        assert_eq!(csv.lines().next(), Some("precision,recall,map50,map50_95,mean_iou"));
    }
}
