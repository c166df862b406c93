//! mAP50, mAP50-95 and the max-F1 operating point on a hand-built scene.

use dcap::metrics::{evaluate, iou, BoxXYXY, Detection, GroundTruth};

fn main() -> dcap::Result<()> {
    let gt = |class_id, x1, y1, x2, y2| GroundTruth { class_id, bbox: BoxXYXY::new(x1, y1, x2, y2) };
    let det = |class_id, score, x1, y1, x2, y2| Detection { class_id, score, bbox: BoxXYXY::new(x1, y1, x2, y2) };

    let truths = vec![
        vec![gt(0, 10.0, 10.0, 30.0, 30.0), gt(1, 40.0, 40.0, 60.0, 52.0)],
        vec![gt(0, 5.0, 5.0, 20.0, 25.0)],
    ];
    let detections = vec![
        vec![det(0, 0.9, 11.0, 10.0, 31.0, 29.0), det(1, 0.8, 40.0, 38.0, 58.0, 52.0), det(0, 0.3, 40.0, 40.0, 60.0, 52.0)],
        vec![det(0, 0.7, 6.0, 8.0, 20.0, 27.0), det(0, 0.6, 5.0, 5.0, 20.0, 25.0)],
    ];

    let a = BoxXYXY::new(0.0, 0.0, 2.0, 2.0);
    let b = BoxXYXY::new(1.0, 1.0, 3.0, 3.0);
    println!("iou((0,0,2,2), (1,1,3,3)) = {:.6} (1/7 = {:.6})", iou(&a, &b), 1.0 / 7.0);

    let report = evaluate(&detections, &truths)?;
    print!("{}", report.to_table());
    println!("\n{}", report.to_csv());
    Ok(())
}
