use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::assign::{assign_targets, GridAssignment};
use super::decode::decode;
use super::loss::{compute_loss, LossBreakdown};
use super::model::DetectorModel;
use super::nms::nms;
use crate::data::{batch_tensor, LabeledImage};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, Detection, EvalReport, GroundTruth};
use crate::nn::Module;
use crate::par::par_map;
use crate::tensor::{Tape, Tensor};

/// Confidence floor used when scoring a model for mAP.
pub const EVAL_CONF: f64 = 0.001;
/// NMS overlap used when scoring a model for mAP.
pub const EVAL_IOU: f64 = 0.6;

const INFER_BATCH: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Epochs over which the learning rate ramps linearly from zero.
    pub warmup_epochs: usize,
    /// Gradients whose global L2 norm exceeds this are rescaled to it.
    pub grad_clip: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, lr: 0.01, momentum: 0.9, batch_size: 8, warmup_epochs: 0, grad_clip: f64::INFINITY, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("need lr >= 0 and momentum in [0, 1), got {} and {}", self.lr, self.momentum)));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config(format!("grad_clip must be positive, got {}", self.grad_clip)));
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum: `v = μv + g; p -= lr·v`, with optional
/// global-norm gradient clipping.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f32,
    pub momentum: f32,
    pub grad_clip: f64,
    velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self { lr: lr as f32, momentum: momentum as f32, grad_clip: f64::INFINITY, velocity: Vec::new() }
    }

    /// Applies gradients from `tape`, which must hold the model's last
    /// forward and backward pass.
    pub fn step(&mut self, model: &mut DetectorModel, tape: &Tape) {
        let grads: Vec<Option<Tensor>> = model.params().iter().map(|p| tape.param_grad(p)).collect();
        let norm = grads.iter().flatten().flat_map(|g| g.data()).map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        let k = if norm > self.grad_clip { (self.grad_clip / norm) as f32 } else { 1.0 };
        if self.velocity.is_empty() {
            self.velocity = model.params().iter().map(|p| vec![0.0; p.numel()]).collect();
        }
        for ((p, g), v) in model.params_mut().into_iter().zip(grads).zip(&mut self.velocity) {
            let Some(g) = g else { continue };
            for ((w, &gi), vi) in p.value_mut().data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
                *vi = self.momentum * *vi + k * gi;
                *w -= self.lr * *vi;
            }
        }
    }
}

/// Trains in place and returns the mean loss of every epoch. `on_epoch`
/// sees each epoch's losses as they complete.
pub fn train(
    model: &mut DetectorModel,
    data: &[LabeledImage],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &LossBreakdown),
) -> Result<Vec<LossBreakdown>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let targets: Vec<GridAssignment> =
        data.iter().map(|img| assign_targets(&img.boxes, &model.config)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sgd = Sgd::new(cfg.lr, cfg.momentum);
    sgd.grad_clip = cfg.grad_clip;
    let batches_per_epoch = data.len().div_ceil(cfg.batch_size);
    let warmup_steps = cfg.warmup_epochs * batches_per_epoch;
    let mut step = 0;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        let mut seen = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let images: Vec<&LabeledImage> = chunk.iter().map(|&i| &data[i]).collect();
            let batch_targets: Vec<GridAssignment> = chunk.iter().map(|&i| targets[i].clone()).collect();
            let mut tape = Tape::new();
            let x = tape.constant(batch_tensor(&images)?);
            let raw = model.forward(&mut tape, x)?;
            let loss = compute_loss(&mut tape, raw, &batch_targets, &model.config)?;
            let b = loss.breakdown(&tape);
            if !b.total.is_finite() {
                return Err(Error::Divergence { epoch, batch: batch + 1, loss: b.total });
            }
            tape.backward(loss.total)?;
            step += 1;
            let ramp = if step <= warmup_steps { step as f64 / warmup_steps as f64 } else { 1.0 };
            sgd.lr = (cfg.lr * ramp) as f32;
            sgd.step(model, &tape);
            let w = chunk.len() as f64;
            sum.box_loss += w * b.box_loss;
            sum.obj_loss += w * b.obj_loss;
            sum.cls_loss += w * b.cls_loss;
            sum.total += w * b.total;
            seen += w;
        }
        let mean = LossBreakdown {
            box_loss: sum.box_loss / seen,
            obj_loss: sum.obj_loss / seen,
            cls_loss: sum.cls_loss / seen,
            total: sum.total / seen,
        };
        on_epoch(epoch, &mean);
        log.push(mean);
    }
    Ok(log)
}

/// Decoded, suppressed detections for each image.
pub fn predict(model: &DetectorModel, images: &[LabeledImage], iou_thresh: f64, conf_thresh: f64) -> Result<Vec<Vec<Detection>>> {
    let chunks: Vec<&[LabeledImage]> = images.chunks(INFER_BATCH).collect();
    let per_chunk = par_map(&chunks, |_, chunk| -> Result<Vec<Vec<Detection>>> {
        let refs: Vec<&LabeledImage> = chunk.iter().collect();
        let raw = model.infer(batch_tensor(&refs)?)?;
        Ok(decode(&raw, &model.config)?.iter().map(|d| nms(d, iou_thresh, conf_thresh)).collect())
    });
    let mut out = Vec::with_capacity(images.len());
    for r in per_chunk {
        out.extend(r?);
    }
    Ok(out)
}

/// Scores `model` on `images` at the evaluation thresholds.
pub fn evaluate_model(model: &DetectorModel, images: &[LabeledImage]) -> Result<EvalReport> {
    let dets = predict(model, images, EVAL_IOU, EVAL_CONF)?;
    let gts: Vec<Vec<GroundTruth>> = images.iter().map(|i| i.boxes.clone()).collect();
    evaluate(&dets, &gts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_image, SynthSpec};
    use crate::detector::ModelConfig;

    fn corpus(n: usize) -> Vec<LabeledImage> {
        let spec = SynthSpec { count: n, seed: 3, ..SynthSpec::default() };
        (0..n).map(|i| synth_image(&spec, i).unwrap().0).collect()
    }

    fn values(m: &DetectorModel) -> Vec<f32> {
        m.params().iter().flat_map(|p| p.value().data().to_vec()).collect()
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let data = corpus(4);
        let mut m = DetectorModel::new(&ModelConfig::default()).unwrap();
        let before = values(&m);
        let cfg = TrainConfig { epochs: 2, lr: 0.0, batch_size: 2, ..TrainConfig::default() };
        let log = train(&mut m, &data, &cfg, |_, _| {}).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(values(&m), before);
    }

    #[test]
    fn repeatable_and_loss_decreases() {
        let data = corpus(4);
        let cfg = TrainConfig { epochs: 6, batch_size: 2, ..TrainConfig::default() };
        let run = || {
            let mut m = DetectorModel::new(&ModelConfig::with_variant(crate::detector::Variant::Base)).unwrap();
            let log = train(&mut m, &data, &cfg, |_, _| {}).unwrap();
            (values(&m), log)
        };
        let (a, log) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert!(log.last().unwrap().total < log[0].total, "{log:?}");
    }

    #[test]
    fn divergence_is_reported() {
        let data = corpus(2);
        let mut m = DetectorModel::new(&ModelConfig::default()).unwrap();
        let cfg = TrainConfig { epochs: 3, lr: 1e30, batch_size: 1, ..TrainConfig::default() };
        assert!(matches!(train(&mut m, &data, &cfg, |_, _| {}), Err(Error::Divergence { .. })));
    }
}
