//! Trains the full detector on an in-memory synthetic corpus and reports
//! metrics on its held-out images.
//!
//! `cargo run --release --example train_detector -- [VARIANT] [EPOCHS]`

use dcap::data::{synth_image, SynthSpec};
use dcap::detector::{evaluate_model, predict, train, DetectorModel, ModelConfig, TrainConfig, Variant, NMS_CONF, NMS_IOU};

fn main() -> dcap::Result<()> {
    let mut args = std::env::args().skip(1);
    let variant: Variant = args.next().as_deref().unwrap_or("dcap").parse()?;
    let epochs = args.next().map_or(Ok(40), |e| e.parse()).map_err(|e| dcap::Error::Config(format!("epochs: {e}")))?;

    let spec = SynthSpec { count: 80, seed: 2, ..SynthSpec::default() };
    let images = (0..spec.count).map(|i| synth_image(&spec, i).map(|(img, _)| img)).collect::<dcap::Result<Vec<_>>>()?;
    let (train_set, held_out) = images.split_at(64);

    let mut model = DetectorModel::new(&ModelConfig::with_variant(variant))?;
    let cfg = TrainConfig { epochs, lr: 0.03, warmup_epochs: 3, grad_clip: 10.0, ..TrainConfig::default() };
    train(&mut model, train_set, &cfg, |epoch, loss| {
        if epoch % 10 == 0 || epoch == 1 {
            println!("epoch {epoch:3}: box {:.3} obj {:.3} cls {:.3}", loss.box_loss, loss.obj_loss, loss.cls_loss);
        }
    })?;

    for (name, set) in [("train", train_set), ("held-out", held_out)] {
        println!("{name}:\n{}", evaluate_model(&model, set)?.to_table());
    }
    let dets = predict(&model, &held_out[..1], NMS_IOU, NMS_CONF)?;
    println!("{}: {} ground truth, {} detections", held_out[0].id, held_out[0].boxes.len(), dets[0].len());
    for d in &dets[0] {
        println!("  class {} score {:.2} box {:?}", d.class_id, d.score, d.bbox);
    }
    Ok(())
}
