//! Independent reference implementations used by the integration and
//! acceptance tests. None of these call into the crate's numerics.

#![allow(dead_code)]

use dcap::metrics::{BoxXYXY, Detection, GroundTruth};
use dcap::Tensor;
use rand::Rng;

/// Six nested loops over output sites and kernel taps.
pub fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&[f64]>, stride: usize, dil: usize, pad: usize) -> Tensor<f64> {
    let (n, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let ho = (h + 2 * pad - dil * (k - 1) - 1) / stride + 1;
    let wo = (wd + 2 * pad - dil * (k - 1) - 1) / stride + 1;
    let mut out = Tensor::zeros([n, cout, ho, wo]);
    for bi in 0..n {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b.map_or(0.0, |b| b[co]);
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky * dil) as isize - pad as isize;
                                let ix = (ox * stride + kx * dil) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.at4(bi, ci, iy as usize, ix as usize) * w.at4(co, ci, ky, kx);
                            }
                        }
                    }
                    out.data_mut()[((bi * cout + co) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

/// Stride-1 max pool with implicit `-inf` padding of `k / 2`.
pub fn naive_same_maxpool(x: &Tensor<f64>, k: usize) -> Tensor<f64> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let r = (k / 2) as isize;
    Tensor::from_fn([n, c, h, w], |i| {
        let (bc, yx) = (i / (h * w), i % (h * w));
        let (y, xx) = ((yx / w) as isize, (yx % w) as isize);
        let mut best = f64::NEG_INFINITY;
        for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
            for xc in (xx - r).max(0)..=(xx + r).min(w as isize - 1) {
                best = best.max(x.data()[bc * h * w + yy as usize * w + xc as usize]);
            }
        }
        best
    })
}

/// Intersection and union of two integer boxes by counting unit cells.
pub fn raster_iou_counts(a: [i64; 4], b: [i64; 4]) -> (i64, i64) {
    let inside = |bx: [i64; 4], x: i64, y: i64| x >= bx[0] && x < bx[2] && y >= bx[1] && y < bx[3];
    let (lo_x, hi_x) = (a[0].min(b[0]), a[2].max(b[2]));
    let (lo_y, hi_y) = (a[1].min(b[1]), a[3].max(b[3]));
    let (mut inter, mut union) = (0, 0);
    for y in lo_y..hi_y {
        for x in lo_x..hi_x {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as i64;
            union += (ia || ib) as i64;
        }
    }
    (inter, union)
}

fn box_iou(a: &BoxXYXY, b: &BoxXYXY) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// `(score, hit, iou)` for every detection of `class`, matched image by image.
fn class_hits(dets: &[Vec<Detection>], gts: &[Vec<GroundTruth>], class: usize, thr: f64) -> Vec<(f64, bool, f64)> {
    let mut out = Vec::new();
    for (d, g) in dets.iter().zip(gts) {
        let mut mine: Vec<&Detection> = d.iter().filter(|x| x.class_id == class).collect();
        mine.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
        let mut used = vec![false; g.len()];
        for det in mine {
            let mut best: Option<(usize, f64)> = None;
            for (gi, gt) in g.iter().enumerate() {
                if used[gi] || gt.class_id != class {
                    continue;
                }
                let v = box_iou(&det.bbox, &gt.bbox);
                if v >= thr && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((gi, v));
                }
            }
            if let Some((gi, _)) = best {
                used[gi] = true;
            }
            out.push((det.score, best.is_some(), best.map_or(0.0, |(_, v)| v)));
        }
    }
    out
}

/// `(tp, kept)` at every distinct score cutoff, highest cutoff first.
fn operating_points(hits: &[(f64, bool, f64)]) -> Vec<(usize, usize)> {
    let mut cutoffs: Vec<f64> = hits.iter().map(|h| h.0).collect();
    cutoffs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cutoffs.dedup();
    cutoffs
        .iter()
        .map(|&s| {
            let kept = hits.iter().filter(|h| h.0 >= s);
            let (tp, k) = kept.fold((0, 0), |(tp, k), h| (tp + h.1 as usize, k + 1));
            (tp, k)
        })
        .collect()
}

/// 101-point interpolated AP by scanning every cutoff for every recall level.
pub fn ap_101(hits: &[(f64, bool, f64)], n_gt: usize) -> f64 {
    let pts = operating_points(hits);
    let mut total = 0.0;
    for r in 0..=100usize {
        let best = pts
            .iter()
            .filter(|&&(tp, _)| tp * 100 >= r * n_gt)
            .map(|&(tp, k)| tp as f64 / k as f64)
            .fold(0.0, f64::max);
        total += best;
    }
    total / 101.0
}

/// Area under the precision envelope with exact recall steps.
pub fn ap_all_points(hits: &[(f64, bool, f64)], n_gt: usize) -> f64 {
    let pts = operating_points(hits);
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (i, &(tp, _)) in pts.iter().enumerate() {
        let recall = tp as f64 / n_gt as f64;
        let envelope = pts[i..].iter().map(|&(t, k)| t as f64 / k as f64).fold(0.0, f64::max);
        area += (recall - prev_recall) * envelope;
        prev_recall = recall;
    }
    area
}

#[derive(Debug)]
pub struct OracleReport {
    pub map50: f64,
    pub map50_95: f64,
    pub mean_iou: f64,
    /// `(class, ap50 by 101 points, ap50 by all points)`.
    pub ap50: Vec<(usize, f64, f64)>,
}

pub fn brute_force_eval(dets: &[Vec<Detection>], gts: &[Vec<GroundTruth>]) -> OracleReport {
    let mut classes: Vec<usize> = gts.iter().flatten().map(|g| g.class_id).collect();
    classes.sort();
    classes.dedup();
    let thresholds: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
    let (mut m50, mut m5095, mut ap50) = (0.0, 0.0, Vec::new());
    let mut tp_ious = Vec::new();
    for &c in &classes {
        let n_gt = gts.iter().flatten().filter(|g| g.class_id == c).count();
        let mut sum = 0.0;
        for (i, &t) in thresholds.iter().enumerate() {
            let hits = class_hits(dets, gts, c, t);
            let ap = ap_101(&hits, n_gt);
            if i == 0 {
                m50 += ap;
                ap50.push((c, ap, ap_all_points(&hits, n_gt)));
                tp_ious.extend(hits.iter().filter(|h| h.1).map(|h| h.2));
            }
            sum += ap;
        }
        m5095 += sum / thresholds.len() as f64;
    }
    let k = classes.len() as f64;
    let mean_iou = if tp_ious.is_empty() { 0.0 } else { tp_ious.iter().sum::<f64>() / tp_ious.len() as f64 };
    OracleReport { map50: m50 / k, map50_95: m5095 / k, mean_iou, ap50 }
}

/// A toy scene: up to `max_images` images with at most `max_boxes` ground
/// truths and `max_boxes` detections each. Detections are jittered copies of
/// ground truth or free-floating boxes; scores come from a coarse grid so
/// ties occur.
pub fn toy_scene<R: Rng>(rng: &mut R, max_images: usize, max_boxes: usize) -> (Vec<Vec<Detection>>, Vec<Vec<GroundTruth>>) {
    let n_img = rng.gen_range(1..=max_images);
    let random_box = |rng: &mut R| {
        let (x, y) = (rng.gen_range(0..48) as f64, rng.gen_range(0..48) as f64);
        BoxXYXY::new(x, y, x + rng.gen_range(4..16) as f64, y + rng.gen_range(4..16) as f64)
    };
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for _ in 0..n_img {
        let g: Vec<GroundTruth> = (0..rng.gen_range(0..=max_boxes))
            .map(|_| GroundTruth { class_id: rng.gen_range(0..2), bbox: random_box(rng) })
            .collect();
        let mut d = Vec::new();
        for _ in 0..rng.gen_range(0..=max_boxes) {
            let score = rng.gen_range(1..=10) as f64 / 10.0;
            if !g.is_empty() && rng.gen_bool(0.7) {
                let t = g[rng.gen_range(0..g.len())];
                let j = |rng: &mut R| rng.gen_range(-3..=3) as f64;
                let b = BoxXYXY::new(t.bbox.x1 + j(rng), t.bbox.y1 + j(rng), t.bbox.x2 + j(rng), t.bbox.y2 + j(rng));
                let class_id = if rng.gen_bool(0.85) { t.class_id } else { 1 - t.class_id };
                d.push(Detection { bbox: b, score, class_id });
            } else {
                d.push(Detection { bbox: random_box(rng), score, class_id: rng.gen_range(0..2) });
            }
        }
        gts.push(g);
        dets.push(d);
    }
    if gts.iter().all(|g| g.is_empty()) {
        gts[0].push(GroundTruth { class_id: 0, bbox: BoxXYXY::new(1.0, 1.0, 9.0, 9.0) });
    }
    (dets, gts)
}
