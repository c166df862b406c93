use crate::metrics::{iou, Detection};

pub const NMS_IOU: f64 = 0.45;
pub const NMS_CONF: f64 = 0.25;

/// Greedy per-class suppression. Detections below `conf_thresh` are
/// dropped; the rest are visited by score (ties: smaller class, then input
/// order) and kept unless a kept box of the same class overlaps with IoU
/// above `iou_thresh`.
pub fn nms(dets: &[Detection], iou_thresh: f64, conf_thresh: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].score >= conf_thresh).collect();
    order.sort_by(|&a, &b| {
        dets[b].score.total_cmp(&dets[a].score).then(dets[a].class_id.cmp(&dets[b].class_id)).then(a.cmp(&b))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let d = &dets[i];
        if kept.iter().all(|k| k.class_id != d.class_id || iou(&k.bbox, &d.bbox) <= iou_thresh) {
            kept.push(*d);
        }
    }
    kept
}
