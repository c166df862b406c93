//! 2-D convolution with dilation, as a direct loop and as im2col + GEMM.
//!
//! Both forward paths accumulate each output as `Σ_(ci,kh,kw) w·x` in the
//! same order and add the bias last, so they agree bit for bit.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvGeometry {
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub const fn new(stride: usize, dilation: usize, padding: usize) -> Self {
        Self { stride, dilation, padding }
    }

    /// Stride 1, dilation 1, padding 0.
    pub const fn pointwise() -> Self {
        Self::new(1, 1, 0)
    }
}

/// `floor((extent + 2·pad − d·(k−1) − 1) / stride) + 1`, or an error when the
/// dilated kernel does not fit the padded input.
pub fn conv_output_extent(extent: usize, kernel: usize, geom: ConvGeometry) -> Result<usize> {
    if geom.stride == 0 || geom.dilation == 0 || kernel == 0 {
        return Err(Error::geometry("conv2d", format!("kernel {kernel}, {geom:?}")));
    }
    let span = geom.dilation * (kernel - 1) + 1;
    let padded = extent + 2 * geom.padding;
    if span > padded {
        return Err(Error::geometry(
            "conv2d",
            format!("dilated kernel extent {span} exceeds padded input extent {padded}"),
        ));
    }
    Ok((padded - span) / geom.stride + 1)
}

pub(crate) struct ConvShape {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvShape {
    pub fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    pub fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

pub(crate) fn conv_shape<S: Scalar>(
    x: &Tensor<S>,
    weight: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    geom: ConvGeometry,
) -> Result<ConvShape> {
    let [n, cin, h, w] = x.dims4("conv2d")?;
    let [cout, wcin, kh, kw] = weight.dims4("conv2d")?;
    if kh != kw {
        return Err(Error::shape("conv2d", format!("kernel must be square, got {kh}x{kw}")));
    }
    if wcin != cin {
        return Err(Error::shape("conv2d", format!("input has {cin} channels, weight expects {wcin}")));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape("conv2d", format!("bias shape {:?}, expected [{cout}]", b.shape())));
        }
    }
    let ho = conv_output_extent(h, kh, geom)?;
    let wo = conv_output_extent(w, kw, geom)?;
    Ok(ConvShape { n, cin, h, w, cout, k: kh, ho, wo })
}

/// Reference convolution: a plain loop over every output site and kernel tap.
pub fn conv2d_direct<S: Scalar>(
    x: &Tensor<S>,
    weight: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    geom: ConvGeometry,
) -> Result<Tensor<S>> {
    let s = conv_shape(x, weight, bias, geom)?;
    let (xd, wd) = (x.data(), weight.data());
    let mut out = vec![S::zero(); s.n * s.cout * s.ho * s.wo];
    let pad = geom.padding as isize;
    for b in 0..s.n {
        for co in 0..s.cout {
            for oy in 0..s.ho {
                for ox in 0..s.wo {
                    let mut acc = S::zero();
                    for ci in 0..s.cin {
                        for ky in 0..s.k {
                            let iy = (oy * geom.stride + ky * geom.dilation) as isize - pad;
                            if iy < 0 || iy >= s.h as isize {
                                continue;
                            }
                            for kx in 0..s.k {
                                let ix = (ox * geom.stride + kx * geom.dilation) as isize - pad;
                                if ix < 0 || ix >= s.w as isize {
                                    continue;
                                }
                                let xv = xd[((b * s.cin + ci) * s.h + iy as usize) * s.w + ix as usize];
                                let wv = wd[((co * s.cin + ci) * s.k + ky) * s.k + kx];
                                acc = acc + wv * xv;
                            }
                        }
                    }
                    if let Some(bias) = bias {
                        acc = acc + bias.data()[co];
                    }
                    out[((b * s.cout + co) * s.ho + oy) * s.wo + ox] = acc;
                }
            }
        }
    }
    Tensor::new(vec![s.n, s.cout, s.ho, s.wo], out)
}

/// Convolution through an explicit patch matrix. Returns the output and,
/// unless the convolution is a stride-1 unpadded 1×1 (where the patch matrix
/// is the input itself), the per-image patch matrices for reuse in backward.
pub fn conv2d_im2col<S: Scalar>(
    x: &Tensor<S>,
    weight: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    geom: ConvGeometry,
) -> Result<Tensor<S>> {
    conv2d_forward(x, weight, bias, geom).map(|(out, _)| out)
}

pub(crate) fn is_pointwise(k: usize, geom: ConvGeometry) -> bool {
    k == 1 && geom.stride == 1 && geom.padding == 0
}

pub(crate) fn conv2d_forward<S: Scalar>(
    x: &Tensor<S>,
    weight: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    geom: ConvGeometry,
) -> Result<(Tensor<S>, Option<Vec<S>>)> {
    let s = conv_shape(x, weight, bias, geom)?;
    let (rows, cols) = (s.rows(), s.cols());
    let pointwise = is_pointwise(s.k, geom);
    let in_plane = s.cin * s.h * s.w;
    let out_plane = s.cout * cols;
    let mut out = vec![S::zero(); s.n * out_plane];
    let mut patches = (!pointwise).then(|| vec![S::zero(); s.n * rows * cols]);
    for b in 0..s.n {
        let xb = &x.data()[b * in_plane..(b + 1) * in_plane];
        let col: &[S] = match patches.as_mut() {
            Some(p) => {
                let slot = &mut p[b * rows * cols..(b + 1) * rows * cols];
                im2col(xb, &s, geom, slot);
                slot
            }
            None => xb,
        };
        let ob = &mut out[b * out_plane..(b + 1) * out_plane];
        gemm_acc(s.cout, rows, cols, weight.data(), col, ob);
        if let Some(bias) = bias {
            for (co, row) in ob.chunks_exact_mut(cols).enumerate() {
                let bv = bias.data()[co];
                row.iter_mut().for_each(|v| *v = *v + bv);
            }
        }
    }
    Ok((Tensor::new(vec![s.n, s.cout, s.ho, s.wo], out)?, patches))
}

/// Gradients of the convolution with respect to its input, weight and bias.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<S: Scalar>(
    x: &Tensor<S>,
    weight: &Tensor<S>,
    patches: Option<&[S]>,
    geom: ConvGeometry,
    grad_out: &[S],
    mut grad_x: Option<&mut [S]>,
    mut grad_w: Option<&mut [S]>,
    mut grad_b: Option<&mut [S]>,
) -> Result<()> {
    let s = conv_shape(x, weight, None, geom)?;
    let (rows, cols) = (s.rows(), s.cols());
    let in_plane = s.cin * s.h * s.w;
    let out_plane = s.cout * cols;
    let mut scratch_col = Vec::new();
    let mut dcol = Vec::new();
    for b in 0..s.n {
        let gb = &grad_out[b * out_plane..(b + 1) * out_plane];
        let xb = &x.data()[b * in_plane..(b + 1) * in_plane];
        if let Some(db) = grad_b.as_deref_mut() {
            for (co, row) in gb.chunks_exact(cols).enumerate() {
                db[co] = db[co] + row.iter().copied().sum::<S>();
            }
        }
        if let Some(dw) = grad_w.as_deref_mut() {
            let col: &[S] = if is_pointwise(s.k, geom) {
                xb
            } else if let Some(p) = patches {
                &p[b * rows * cols..(b + 1) * rows * cols]
            } else {
                scratch_col.resize(rows * cols, S::zero());
                im2col(xb, &s, geom, &mut scratch_col);
                &scratch_col
            };
            gemm_abt_acc(s.cout, cols, rows, gb, col, dw);
        }
        if let Some(dx) = grad_x.as_deref_mut() {
            let dxb = &mut dx[b * in_plane..(b + 1) * in_plane];
            if is_pointwise(s.k, geom) {
                gemm_atb_acc(s.cout, rows, cols, weight.data(), gb, dxb);
            } else {
                dcol.clear();
                dcol.resize(rows * cols, S::zero());
                gemm_atb_acc(s.cout, rows, cols, weight.data(), gb, &mut dcol);
                col2im_acc(&dcol, &s, geom, dxb);
            }
        }
    }
    Ok(())
}

fn im2col<S: Scalar>(xb: &[S], s: &ConvShape, geom: ConvGeometry, col: &mut [S]) {
    let cols = s.cols();
    let pad = geom.padding as isize;
    for ci in 0..s.cin {
        for ky in 0..s.k {
            for kx in 0..s.k {
                let r = (ci * s.k + ky) * s.k + kx;
                let row = &mut col[r * cols..(r + 1) * cols];
                for oy in 0..s.ho {
                    let iy = (oy * geom.stride + ky * geom.dilation) as isize - pad;
                    let dst = &mut row[oy * s.wo..(oy + 1) * s.wo];
                    if iy < 0 || iy >= s.h as isize {
                        dst.iter_mut().for_each(|v| *v = S::zero());
                        continue;
                    }
                    let src = &xb[(ci * s.h + iy as usize) * s.w..(ci * s.h + iy as usize + 1) * s.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * geom.stride + kx * geom.dilation) as isize - pad;
                        *d = if ix < 0 || ix >= s.w as isize { S::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im_acc<S: Scalar>(dcol: &[S], s: &ConvShape, geom: ConvGeometry, dxb: &mut [S]) {
    let cols = s.cols();
    let pad = geom.padding as isize;
    for ci in 0..s.cin {
        for ky in 0..s.k {
            for kx in 0..s.k {
                let r = (ci * s.k + ky) * s.k + kx;
                let row = &dcol[r * cols..(r + 1) * cols];
                for oy in 0..s.ho {
                    let iy = (oy * geom.stride + ky * geom.dilation) as isize - pad;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let base = (ci * s.h + iy as usize) * s.w;
                    for ox in 0..s.wo {
                        let ix = (ox * geom.stride + kx * geom.dilation) as isize - pad;
                        if ix >= 0 && ix < s.w as isize {
                            let d = &mut dxb[base + ix as usize];
                            *d = *d + row[oy * s.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`, accumulating each output over `k` in order.
pub(crate) fn gemm_acc<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], c: &mut [S]) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`.
pub(crate) fn gemm_atb_acc<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], c: &mut [S]) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// `c[m×k] += a[m×n] · b[k×n]ᵀ`.
pub(crate) fn gemm_abt_acc<S: Scalar>(m: usize, n: usize, k: usize, a: &[S], b: &[S], c: &mut [S]) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let cv = &mut c[i * k + p];
            *cv = *cv + dot(arow, brow);
        }
    }
}

#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut lanes = [S::zero(); 8];
    let mut ac = a.chunks_exact(8);
    let mut bc = b.chunks_exact(8);
    for (x, y) in (&mut ac).zip(&mut bc) {
        for l in 0..8 {
            lanes[l] = lanes[l] + x[l] * y[l];
        }
    }
    let mut acc = lanes.iter().copied().fold(S::zero(), |s, v| s + v);
    for (&x, &y) in ac.remainder().iter().zip(bc.remainder()) {
        acc = acc + x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn dilated_row_sums_every_other_element() {
        let x = t(&[1, 1, 1, 5], &[1., 2., 3., 4., 5.]);
        // Kernels are square: put [1,1,1] in the middle row of a 3×3 kernel and
        // pad by the dilation so the vertical taps land on zeros.
        let mut w = vec![0.0; 9];
        w[3..6].copy_from_slice(&[1., 1., 1.]);
        let w = t(&[1, 1, 3, 3], &w);
        let out = conv2d_im2col(&x, &w, None, ConvGeometry::new(1, 2, 2)).unwrap();
        // Output column 2 reads x[0], x[2], x[4] without touching padding.
        assert_eq!(out.shape(), &[1, 1, 1, 5]);
        assert_eq!(out.data()[2], 9.0);
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::uniform([2, 3, 5, 6], -1.0, 1.0, &mut rng);
        let mut w = vec![0.0; 3 * 3 * 9];
        for c in 0..3 {
            w[(c * 3 + c) * 9 + 4] = 1.0;
        }
        let w = t(&[3, 3, 3, 3], &w);
        let out = conv2d_im2col(&x, &w, None, ConvGeometry::new(1, 1, 1)).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn ones_kernel_on_ones_gives_nine() {
        let x = Tensor::<f64>::ones([1, 1, 4, 4]);
        let w = Tensor::<f64>::ones([1, 1, 3, 3]);
        let out = conv2d_im2col(&x, &w, None, ConvGeometry::pointwise()).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert!(out.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn im2col_matches_direct_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(k, d, pad, stride) in &[(3, 1, 1, 1), (3, 2, 2, 2), (1, 1, 0, 1), (7, 1, 3, 1), (3, 3, 0, 1)] {
            let x = Tensor::<f32>::uniform([2, 3, 9, 11], -1.0, 1.0, &mut rng);
            let w = Tensor::<f32>::uniform([4, 3, k, k], -1.0, 1.0, &mut rng);
            let b = Tensor::<f32>::uniform([4], -1.0, 1.0, &mut rng);
            let g = ConvGeometry::new(stride, d, pad);
            let a = conv2d_direct(&x, &w, Some(&b), g).unwrap();
            let c = conv2d_im2col(&x, &w, Some(&b), g).unwrap();
            assert_eq!(a, c, "k={k} d={d} pad={pad} stride={stride}");
        }
    }

    #[test]
    fn oversized_kernel_is_degenerate() {
        let x = Tensor::<f64>::ones([1, 1, 4, 4]);
        let w = Tensor::<f64>::ones([1, 1, 3, 3]);
        let err = conv2d_im2col(&x, &w, None, ConvGeometry::new(1, 3, 0)).unwrap_err();
        assert!(matches!(err, Error::Geometry { .. }));
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let x = Tensor::<f64>::ones([1, 2, 4, 4]);
        let w = Tensor::<f64>::ones([1, 3, 3, 3]);
        assert!(matches!(conv2d_direct(&x, &w, None, ConvGeometry::pointwise()), Err(Error::Shape { .. })));
    }
}
