use std::f64::consts::PI;

use super::assign::GridAssignment;
use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::metrics::{iou, BoxXYXY};
use crate::tensor::{Scalar, Tape, Tensor, Var};

pub const BOX_WEIGHT: f64 = 0.05;
pub const OBJ_WEIGHT: f64 = 1.0;
pub const CLS_WEIGHT: f64 = 0.5;

/// Guards divisions in the differentiable CIoU.
const CIOU_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub box_loss: f64,
    pub obj_loss: f64,
    pub cls_loss: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str = "epoch,box_loss,obj_loss,cls_loss,total";

    pub fn csv_row(&self, epoch: usize) -> String {
        format!("{epoch},{:.6},{:.6},{:.6},{:.6}", self.box_loss, self.obj_loss, self.cls_loss, self.total)
    }
}

/// Loss terms as tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub box_loss: Var,
    pub obj_loss: Var,
    pub cls_loss: Var,
    pub total: Var,
}

impl LossVars {
    pub fn breakdown<S: Scalar>(&self, tape: &Tape<S>) -> LossBreakdown {
        let get = |v: Var| tape.value(v).data()[0].as_f64();
        LossBreakdown {
            box_loss: get(self.box_loss),
            obj_loss: get(self.obj_loss),
            cls_loss: get(self.cls_loss),
            total: get(self.total),
        }
    }
}

/// Complete IoU: IoU minus the normalized center distance minus the
/// aspect-ratio penalty `α·v`.
pub fn ciou(a: &BoxXYXY, b: &BoxXYXY) -> f64 {
    let i = iou(a, b);
    let (acx, acy) = a.center();
    let (bcx, bcy) = b.center();
    let rho2 = (acx - bcx).powi(2) + (acy - bcy).powi(2);
    let cw = a.x2.max(b.x2) - a.x1.min(b.x1);
    let ch = a.y2.max(b.y2) - a.y1.min(b.y1);
    let c2 = cw * cw + ch * ch;
    let v = 4.0 / (PI * PI) * ((b.width() / b.height()).atan() - (a.width() / a.height()).atan()).powi(2);
    let alpha = if v == 0.0 { 0.0 } else { v / ((1.0 - i) + v) };
    let dist = if c2 > 0.0 { rho2 / c2 } else { 0.0 };
    i - dist - alpha * v
}

fn vector<S: Scalar>(tape: &mut Tape<S>, v: Vec<f64>) -> Var {
    let n = v.len();
    tape.constant(Tensor::new(vec![n], v.into_iter().map(S::of).collect()).expect("rank-1 length matches"))
}

/// Composite loss over a batch. `raw` is the head output `[N, 5 + C, G, G]`
/// and `targets[n]` the assignment for image `n`.
pub fn compute_loss<S: Scalar>(
    tape: &mut Tape<S>,
    raw: Var,
    targets: &[GridAssignment],
    cfg: &ModelConfig,
) -> Result<LossVars> {
    let shape = tape.shape(raw).to_vec();
    let g = cfg.grid_size();
    let ch = cfg.head_channels();
    if shape != [targets.len(), ch, g, g] {
        return Err(Error::shape(
            "compute_loss",
            format!("raw {shape:?} does not match {} targets on a {g}x{g} grid with {ch} channels", targets.len()),
        ));
    }
    let gg = g * g;
    let flat = |n: usize, c: usize, cell: usize| (n * ch + c) * gg + cell;

    let mut obj_idx = Vec::with_capacity(targets.len() * gg);
    let mut obj_t = Vec::with_capacity(targets.len() * gg);
    for (n, a) in targets.iter().enumerate() {
        if a.grid != g || a.obj.len() != gg {
            return Err(Error::shape("compute_loss", format!("assignment grid {} differs from model grid {g}", a.grid)));
        }
        obj_idx.extend((0..gg).map(|cell| flat(n, 4, cell)));
        obj_t.extend(a.obj.iter().map(|&t| S::of(t)));
    }
    let obj_logits = tape.gather(raw, &obj_idx)?;
    let obj_bce = tape.bce_with_logits(obj_logits, &obj_t)?;
    let obj_loss = tape.mean(obj_bce);

    let assigned: Vec<(usize, &super::assign::AssignedCell)> =
        targets.iter().enumerate().flat_map(|(n, a)| a.cells.iter().map(move |c| (n, c))).collect();
    let (box_loss, cls_loss) = if assigned.is_empty() {
        let zero = tape.constant(Tensor::scalar(S::zero()));
        (zero, zero)
    } else {
        let mut cls_idx = Vec::new();
        let mut cls_t = Vec::new();
        for &(n, a) in &assigned {
            for c in 0..cfg.num_classes {
                cls_idx.push(flat(n, 5 + c, a.cell(g)));
                cls_t.push(if c == a.gt.class_id { S::one() } else { S::zero() });
            }
        }
        let cls_logits = tape.gather(raw, &cls_idx)?;
        let cls_bce = tape.bce_with_logits(cls_logits, &cls_t)?;
        let cls_loss = tape.mean(cls_bce);

        let pick = |tape: &mut Tape<S>, c: usize| -> Result<Var> {
            let idx: Vec<usize> = assigned.iter().map(|&(n, a)| flat(n, c, a.cell(g))).collect();
            tape.gather(raw, &idx)
        };
        let t: Vec<Var> = (0..4).map(|c| pick(tape, c)).collect::<Result<_>>()?;
        let ciou = ciou_on_tape(tape, &t, &assigned.iter().map(|&(_, a)| a).collect::<Vec<_>>(), cfg)?;
        let mean_ciou = tape.mean(ciou);
        (tape.affine(mean_ciou, -S::one(), S::one()), cls_loss)
    };

    let wb = tape.scale(box_loss, S::of(BOX_WEIGHT));
    let wo = tape.scale(obj_loss, S::of(OBJ_WEIGHT));
    let wc = tape.scale(cls_loss, S::of(CLS_WEIGHT));
    let partial = tape.add(wb, wo)?;
    let total = tape.add(partial, wc)?;
    Ok(LossVars { box_loss, obj_loss, cls_loss, total })
}

/// CIoU between the boxes decoded from offsets `t = [tx, ty, tw, th]` and
/// the assigned ground truth, one element per assigned cell.
fn ciou_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    t: &[Var],
    cells: &[&super::assign::AssignedCell],
    cfg: &ModelConfig,
) -> Result<Var> {
    let s = cfg.stride() as f64;
    let eps = S::of(CIOU_EPS);
    let col = |f: &dyn Fn(&super::assign::AssignedCell) -> f64| cells.iter().map(|c| f(c)).collect::<Vec<f64>>();

    let off_x = vector(tape, col(&|c| (c.gx as f64 - 0.5) * s));
    let off_y = vector(tape, col(&|c| (c.gy as f64 - 0.5) * s));
    let sx = tape.sigmoid(t[0]);
    let sx = tape.scale(sx, S::of(2.0 * s));
    let px = tape.add(sx, off_x)?;
    let sy = tape.sigmoid(t[1]);
    let sy = tape.scale(sy, S::of(2.0 * s));
    let py = tape.add(sy, off_y)?;
    let sw = tape.sigmoid(t[2]);
    let sw2 = tape.mul(sw, sw)?;
    let pw = tape.scale(sw2, S::of(4.0 * cfg.anchor.0));
    let sh = tape.sigmoid(t[3]);
    let sh2 = tape.mul(sh, sh)?;
    let ph = tape.scale(sh2, S::of(4.0 * cfg.anchor.1));

    let half_w = tape.scale(pw, S::of(0.5));
    let half_h = tape.scale(ph, S::of(0.5));
    let px1 = tape.sub(px, half_w)?;
    let px2 = tape.add(px, half_w)?;
    let py1 = tape.sub(py, half_h)?;
    let py2 = tape.add(py, half_h)?;

    let gx1 = vector(tape, col(&|c| c.gt.bbox.x1));
    let gx2 = vector(tape, col(&|c| c.gt.bbox.x2));
    let gy1 = vector(tape, col(&|c| c.gt.bbox.y1));
    let gy2 = vector(tape, col(&|c| c.gt.bbox.y2));
    let gcx = vector(tape, col(&|c| c.gt.bbox.center().0));
    let gcy = vector(tape, col(&|c| c.gt.bbox.center().1));
    let garea = vector(tape, col(&|c| c.gt.bbox.area()));
    let gatan = vector(tape, col(&|c| (c.gt.bbox.width() / c.gt.bbox.height()).atan()));
    let zero = vector(tape, vec![0.0; cells.len()]);

    // overlap
    let ix2 = tape.minimum(px2, gx2)?;
    let ix1 = tape.maximum(px1, gx1)?;
    let iw = tape.sub(ix2, ix1)?;
    let iw = tape.maximum(iw, zero)?;
    let iy2 = tape.minimum(py2, gy2)?;
    let iy1 = tape.maximum(py1, gy1)?;
    let ih = tape.sub(iy2, iy1)?;
    let ih = tape.maximum(ih, zero)?;
    let inter = tape.mul(iw, ih)?;
    let parea = tape.mul(pw, ph)?;
    let union = tape.add(parea, garea)?;
    let union = tape.sub(union, inter)?;
    let union = tape.add_scalar(union, eps);
    let iou = tape.div(inter, union)?;

    // center distance over the enclosing diagonal
    let ex2 = tape.maximum(px2, gx2)?;
    let ex1 = tape.minimum(px1, gx1)?;
    let cw = tape.sub(ex2, ex1)?;
    let ey2 = tape.maximum(py2, gy2)?;
    let ey1 = tape.minimum(py1, gy1)?;
    let chh = tape.sub(ey2, ey1)?;
    let cw2 = tape.mul(cw, cw)?;
    let ch2 = tape.mul(chh, chh)?;
    let c2 = tape.add(cw2, ch2)?;
    let c2 = tape.add_scalar(c2, eps);
    let dx = tape.sub(px, gcx)?;
    let dy = tape.sub(py, gcy)?;
    let dx2 = tape.mul(dx, dx)?;
    let dy2 = tape.mul(dy, dy)?;
    let rho2 = tape.add(dx2, dy2)?;
    let dist = tape.div(rho2, c2)?;

    // aspect-ratio consistency
    let ph_safe = tape.add_scalar(ph, eps);
    let ratio = tape.div(pw, ph_safe)?;
    let patan = tape.atan(ratio);
    let diff = tape.sub(gatan, patan)?;
    let diff2 = tape.mul(diff, diff)?;
    let v = tape.scale(diff2, S::of(4.0 / (PI * PI)));
    let one_minus_iou = tape.affine(iou, -S::one(), S::one());
    let denom = tape.add(one_minus_iou, v)?;
    let denom = tape.add_scalar(denom, eps);
    let alpha = tape.div(v, denom)?;
    let av = tape.mul(alpha, v)?;

    let c = tape.sub(iou, dist)?;
    tape.sub(c, av)
}
