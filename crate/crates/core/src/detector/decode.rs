use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::metrics::{BoxXYXY, Detection};
use crate::tensor::{Activation, Scalar, Tensor};

fn sigmoid(x: f64) -> f64 {
    Activation::Sigmoid.apply(x)
}

/// Box in pixels for the offsets `t = (tx, ty, tw, th)` at cell `(gx, gy)`,
/// before clipping.
pub fn decode_box(t: [f64; 4], gx: usize, gy: usize, cfg: &ModelConfig) -> BoxXYXY {
    let s = cfg.stride() as f64;
    let cx = (2.0 * sigmoid(t[0]) - 0.5 + gx as f64) * s;
    let cy = (2.0 * sigmoid(t[1]) - 0.5 + gy as f64) * s;
    let w = (2.0 * sigmoid(t[2])).powi(2) * cfg.anchor.0;
    let h = (2.0 * sigmoid(t[3])).powi(2) * cfg.anchor.1;
    BoxXYXY::from_center(cx, cy, w, h)
}

/// Inverse of [`decode_box`]: offsets that reproduce `b` from cell `(gx, gy)`.
/// Returns `None` when `b` is out of the cell's reach.
pub fn encode_box(b: &BoxXYXY, gx: usize, gy: usize, cfg: &ModelConfig) -> Option<[f64; 4]> {
    let s = cfg.stride() as f64;
    let logit = |p: f64| if p > 0.0 && p < 1.0 { Some((p / (1.0 - p)).ln()) } else { None };
    let (cx, cy) = b.center();
    Some([
        logit((cx / s - gx as f64 + 0.5) / 2.0)?,
        logit((cy / s - gy as f64 + 0.5) / 2.0)?,
        logit((b.width() / cfg.anchor.0).sqrt() / 2.0)?,
        logit((b.height() / cfg.anchor.1).sqrt() / 2.0)?,
    ])
}

/// One detection per grid cell for every image of a raw head output
/// `[N, 5 + C, G, G]`. Cells are visited row-major.
pub fn decode<S: Scalar>(raw: &Tensor<S>, cfg: &ModelConfig) -> Result<Vec<Vec<Detection>>> {
    let [n, ch, gh, gw] = raw.dims4("decode")?;
    let g = cfg.grid_size();
    if ch != cfg.head_channels() || gh != g || gw != g {
        return Err(Error::shape("decode", format!("expected [N, {}, {g}, {g}], got {:?}", cfg.head_channels(), raw.shape())));
    }
    let size = cfg.image_size as f64;
    let d = raw.data();
    let at = |b: usize, c: usize, cell: usize| d[(b * ch + c) * g * g + cell].as_f64();
    Ok((0..n)
        .map(|b| {
            (0..g * g)
                .map(|cell| {
                    let (gy, gx) = (cell / g, cell % g);
                    let t = [at(b, 0, cell), at(b, 1, cell), at(b, 2, cell), at(b, 3, cell)];
                    let (class_id, cls) = (0..cfg.num_classes)
                        .map(|c| (c, sigmoid(at(b, 5 + c, cell))))
                        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
                    Detection {
                        bbox: decode_box(t, gx, gy, cfg).clip(size, size),
                        score: sigmoid(at(b, 4, cell)) * cls,
                        class_id,
                    }
                })
                .collect()
        })
        .collect())
}
