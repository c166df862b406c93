//! Decode, assignment, suppression and checkpoints against brute-force
//! restatements of their rules.

use dcap::detector::{
    assign_targets, checkpoint_from_bytes, checkpoint_to_bytes, decode, decode_box, encode_box, nms, DetectorModel,
    ModelConfig, Variant,
};
use dcap::metrics::{iou, BoxXYXY, Detection, GroundTruth};
use dcap::{Error, Tensor};
use proptest::prelude::*;

fn arb_detection() -> impl Strategy<Value = Detection> {
    (0u32..40, 0u32..40, 2u32..16, 2u32..16, 0u32..6, 0usize..2).prop_map(|(x, y, w, h, s, c)| Detection {
        bbox: BoxXYXY::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64),
        score: 0.1 + 0.15 * s as f64,
        class_id: c,
    })
}

/// Repeatedly takes the best remaining candidate and deletes what it covers.
fn nms_oracle(dets: &[Detection], iou_thresh: f64, conf: f64) -> Vec<Detection> {
    let mut pool: Vec<(usize, Detection)> = dets.iter().copied().enumerate().filter(|(_, d)| d.score >= conf).collect();
    let mut kept = Vec::new();
    while !pool.is_empty() {
        let best = (0..pool.len())
            .min_by(|&a, &b| {
                let (ia, da) = pool[a];
                let (ib, db) = pool[b];
                db.score.partial_cmp(&da.score).unwrap().then(da.class_id.cmp(&db.class_id)).then(ia.cmp(&ib))
            })
            .unwrap();
        let (_, winner) = pool.remove(best);
        pool.retain(|(_, d)| d.class_id != winner.class_id || iou(&d.bbox, &winner.bbox) <= iou_thresh);
        kept.push(winner);
    }
    kept
}

proptest! {
    #[test]
    fn nms_matches_oracle(dets in prop::collection::vec(arb_detection(), 0..25), thr in 0.1..0.9f64) {
        let kept = nms(&dets, thr, 0.25);
        prop_assert_eq!(&kept, &nms_oracle(&dets, thr, 0.25));
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(a.class_id != b.class_id || iou(&a.bbox, &b.bbox) <= thr);
            }
        }
    }

    #[test]
    fn encode_inverts_decode(cx in 4.0..60.0f64, cy in 4.0..60.0f64, w in 1.0..60.0f64, h in 1.0..60.0f64) {
        let cfg = ModelConfig::default();
        let s = cfg.stride() as f64;
        let (gx, gy) = ((cx / s) as usize, (cy / s) as usize);
        let b = BoxXYXY::from_center(cx, cy, w, h);
        let t = encode_box(&b, gx, gy, &cfg).expect("centre cell reaches its own box");
        let back = decode_box(t, gx, gy, &cfg);
        for (p, q) in [(back.x1, b.x1), (back.y1, b.y1), (back.x2, b.x2), (back.y2, b.y2)] {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn assignment_matches_cell_scan(boxes in prop::collection::vec((1.0..63.0f64, 1.0..63.0f64, 1.0..30.0f64, 1.0..30.0f64, 0usize..2), 0..12)) {
        let cfg = ModelConfig::default();
        let gts: Vec<GroundTruth> = boxes.iter().map(|&(cx, cy, w, h, c)| GroundTruth { class_id: c, bbox: BoxXYXY::from_center(cx, cy, w, h) }).collect();
        let a = assign_targets(&gts, &cfg).unwrap();
        let (g, s) = (cfg.grid_size(), cfg.stride() as f64);
        let mut expect = Vec::new();
        for gy in 0..g {
            for gx in 0..g {
                let inside = |gt: &GroundTruth| {
                    let (cx, cy) = gt.bbox.center();
                    (cx / s).floor() as usize == gx && (cy / s).floor() as usize == gy
                };
                let mut winner: Option<&GroundTruth> = None;
                for gt in gts.iter().filter(|gt| inside(gt)) {
                    if winner.is_none_or(|w| gt.bbox.area() > w.bbox.area()) {
                        winner = Some(gt);
                    }
                }
                if let Some(w) = winner {
                    expect.push((gx, gy, *w));
                }
            }
        }
        let got: Vec<(usize, usize, GroundTruth)> = a.cells.iter().map(|c| (c.gx, c.gy, c.gt)).collect();
        prop_assert_eq!(got, expect.clone());
        prop_assert_eq!(a.obj.iter().filter(|&&o| o == 1.0).count(), expect.len());
    }
}

#[test]
fn decode_reads_the_documented_channel_layout() {
    let cfg = ModelConfig::default();
    let g = cfg.grid_size();
    let mut raw = Tensor::<f64>::zeros([1, cfg.head_channels(), g, g]);
    let (gx, gy) = (3, 5);
    let set = |raw: &mut Tensor<f64>, c: usize, v: f64| raw.data_mut()[c * g * g + gy * g + gx] = v;
    let logit = |p: f64| (p / (1.0 - p)).ln();
    // centre offset 0.75 → sigmoid 0.625; size factor 1.5 → sigmoid 0.75
    set(&mut raw, 0, logit(0.625));
    set(&mut raw, 1, logit(0.5));
    set(&mut raw, 2, logit(0.75));
    set(&mut raw, 3, logit(0.25));
    set(&mut raw, 4, logit(0.9));
    set(&mut raw, 5, logit(0.2));
    set(&mut raw, 6, logit(0.8));
    let d = decode(&raw, &cfg).unwrap()[0][gy * g + gx];
    let s = cfg.stride() as f64;
    let (cx, cy) = ((gx as f64 + 0.75) * s, (gy as f64 + 0.5) * s);
    let (w, h) = (2.25 * cfg.anchor.0, 0.25 * cfg.anchor.1);
    let expect = BoxXYXY::from_center(cx, cy, w, h);
    assert_eq!(d.class_id, 1);
    assert!((d.score - 0.72).abs() < 1e-12);
    assert!((d.bbox.x1 - expect.x1).abs() < 1e-9 && (d.bbox.x2 - expect.x2).abs() < 1e-9);
    assert!((d.bbox.y1 - expect.y1).abs() < 1e-9 && (d.bbox.y2 - expect.y2).abs() < 1e-9);
}

#[test]
fn checkpoint_rejects_other_architectures_and_damage() {
    let cfg = ModelConfig::with_variant(Variant::Dcap);
    let bytes = checkpoint_to_bytes(&DetectorModel::new(&cfg).unwrap());

    let other = ModelConfig::with_variant(Variant::Base);
    assert!(matches!(checkpoint_from_bytes(&bytes, &other), Err(Error::Checkpoint(_))));
    let wider = ModelConfig { channels: vec![8, 16, 48], ..cfg.clone() };
    assert!(matches!(checkpoint_from_bytes(&bytes, &wider), Err(Error::Checkpoint(_))));

    let reseeded = ModelConfig { seed: 42, ..cfg.clone() };
    assert!(checkpoint_from_bytes(&bytes, &reseeded).is_ok());

    assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 1], &cfg).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(checkpoint_from_bytes(&extra, &cfg).is_err());
    let mut magic = bytes.clone();
    magic[0] ^= 0xff;
    assert!(checkpoint_from_bytes(&magic, &cfg).is_err());
}
