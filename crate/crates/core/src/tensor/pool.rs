use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub fn pool_output_extent(extent: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::geometry("maxpool2d", format!("kernel {kernel}, stride {stride}")));
    }
    if pad >= kernel {
        return Err(Error::geometry("maxpool2d", format!("padding {pad} must be smaller than kernel {kernel}")));
    }
    let padded = extent + 2 * pad;
    if kernel > padded {
        return Err(Error::geometry(
            "maxpool2d",
            format!("window {kernel} larger than padded input extent {padded}"),
        ));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Max pooling over `k×k` windows. Padded cells never win the max. Returns the
/// pooled tensor and, per output cell, the flat input index of the winning
/// element (first in row-major scan order on ties).
pub fn maxpool2d<S: Scalar>(x: &Tensor<S>, k: usize, stride: usize, pad: usize) -> Result<(Tensor<S>, Vec<usize>)> {
    let [n, c, h, w] = x.dims4("maxpool2d")?;
    let ho = pool_output_extent(h, k, stride, pad)?;
    let wo = pool_output_extent(w, k, stride, pad)?;
    let xd = x.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            let y0 = (oy * stride) as isize - pad as isize;
            let ys = y0.max(0) as usize..((y0 + k as isize).min(h as isize)) as usize;
            for ox in 0..wo {
                let x0 = (ox * stride) as isize - pad as isize;
                let xs = x0.max(0) as usize..((x0 + k as isize).min(w as isize)) as usize;
                let mut best = None::<(S, usize)>;
                for iy in ys.clone() {
                    for ix in xs.clone() {
                        let idx = base + iy * w + ix;
                        let v = xd[idx];
                        match best {
                            Some((b, _)) if !(v > b) => {}
                            _ => best = Some((v, idx)),
                        }
                    }
                }
                // pad < k guarantees every window overlaps the input
                let (v, idx) = best.expect("pooling window lies entirely in padding");
                out.push(v);
                argmax.push(idx);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, ho, wo], out)?, argmax))
}

/// Per-channel spatial mean, NCHW → NC11.
pub fn global_avg_pool<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let [n, c, h, w] = x.dims4("global_avg_pool")?;
    if h == 0 || w == 0 {
        return Err(Error::geometry("global_avg_pool", "empty spatial extent"));
    }
    let inv = S::one() / S::of((h * w) as f64);
    let data = x.data().chunks_exact(h * w).map(|p| p.iter().copied().sum::<S>() * inv).collect();
    Tensor::new(vec![n, c, 1, 1], data)
}
