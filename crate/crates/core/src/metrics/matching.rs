use super::{iou, Detection, GroundTruth};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchResult {
    /// Per detection (input order): the matched ground-truth index and IoU.
    pub matches: Vec<Option<(usize, f64)>>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Greedy matching. Detections are visited by descending score (ties in input
/// order); each takes the unmatched same-class ground truth with the highest
/// IoU at or above `iou_thresh` (ties to the lower index).
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_thresh: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut taken = vec![false; gts.len()];
    let mut matches = vec![None; dets.len()];
    for di in order {
        let d = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if taken[gi] || g.class_id != d.class_id {
                continue;
            }
            let v = iou(&d.bbox, &g.bbox);
            if v >= iou_thresh && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, _)) = best {
            taken[gi] = true;
        }
        matches[di] = best;
    }
    let tp = matches.iter().filter(|m| m.is_some()).count();
    MatchResult { true_positives: tp, false_positives: dets.len() - tp, false_negatives: gts.len() - tp, matches }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::BoxXYXY;

    fn det(b: BoxXYXY, score: f64, class_id: usize) -> Detection {
        Detection { bbox: b, score, class_id }
    }

    #[test]
    fn exact_hit() {
        let b = BoxXYXY::new(0., 0., 10., 10.);
        let m = match_detections(&[det(b, 0.9, 0)], &[GroundTruth { class_id: 0, bbox: b }], 0.5);
        assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (1, 0, 0));
    }

    #[test]
    fn higher_score_claims_the_ground_truth() {
        let g = BoxXYXY::new(0., 0., 10., 10.);
        let dets = [det(BoxXYXY::new(0., 0., 10., 9.), 0.6, 0), det(BoxXYXY::new(1., 0., 10., 10.), 0.8, 0)];
        let m = match_detections(&dets, &[GroundTruth { class_id: 0, bbox: g }], 0.5);
        assert_eq!((m.true_positives, m.false_positives), (1, 1));
        assert!(m.matches[1].is_some() && m.matches[0].is_none());
    }

    #[test]
    fn class_gating() {
        let b = BoxXYXY::new(0., 0., 10., 10.);
        let m = match_detections(&[det(b, 0.9, 1)], &[GroundTruth { class_id: 0, bbox: b }], 0.5);
        assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (0, 1, 1));
    }
}
