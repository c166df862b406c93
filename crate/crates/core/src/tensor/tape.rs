use std::collections::HashMap;

use super::conv::{conv2d_backward, conv2d_forward, ConvGeometry};
use super::pool::{global_avg_pool, maxpool2d};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::nn::{Param, ParamId};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Silu,
}

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => x.max(S::zero()),
            Activation::Sigmoid => sigmoid(x),
            Activation::Silu => x * sigmoid(x),
        }
    }

    /// Derivative at `x`; `relu'(0) = 0`.
    #[inline]
    fn derivative<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => {
                if x > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (S::one() - s)
            }
            Activation::Silu => {
                let s = sigmoid(x);
                s * (S::one() + x * (S::one() - s))
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

enum Op<S> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeometry, patches: Option<Vec<S>> },
    MaxPool { x: Var, argmax: Vec<usize> },
    GlobalAvgPool { x: Var },
    Dense { x: Var, w: Var, b: Option<Var> },
    Activation { x: Var, kind: Activation },
    Concat { xs: Vec<Var> },
    SliceChannels { x: Var, start: usize },
    Reshape { x: Var },
    Binary { a: Var, b: Var, op: BinaryOp },
    Affine { x: Var, scale: S },
    Sum { x: Var },
    Gather { x: Var, indices: Vec<usize> },
    Atan { x: Var },
    BceWithLogits { x: Var, target: Vec<S> },
}

impl<S> Op<S> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool { .. } => "maxpool2d",
            Op::GlobalAvgPool { .. } => "global_avg_pool",
            Op::Dense { .. } => "dense",
            Op::Activation { .. } => "activate",
            Op::Concat { .. } => "concat_channels",
            Op::SliceChannels { .. } => "slice_channels",
            Op::Reshape { .. } => "reshape",
            Op::Binary { .. } => "elementwise",
            Op::Affine { .. } => "affine",
            Op::Sum { .. } => "sum",
            Op::Gather { .. } => "gather",
            Op::Atan { .. } => "atan",
            Op::BceWithLogits { .. } => "bce_with_logits",
        }
    }
}

/// Op names accepted by [`Tape::inject_fault`].
pub const FAULT_OPS: [&str; 14] = [
    "conv2d",
    "maxpool2d",
    "global_avg_pool",
    "dense",
    "activate",
    "concat_channels",
    "slice_channels",
    "reshape",
    "elementwise",
    "affine",
    "sum",
    "gather",
    "atan",
    "bce_with_logits",
];

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Records a forward pass so that [`Tape::backward`] can differentiate it.
///
/// A tape is built for one forward pass and is not shared between threads.
/// Parameters are bound with [`Tape::param`]; binding the same parameter twice
/// returns the same [`Var`].
pub struct Tape<S: Scalar = f32> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Vec<S>>>,
    params: HashMap<ParamId, Var>,
    track_params: bool,
    fault: Option<String>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new(), params: HashMap::new(), track_params: true, fault: None }
    }

    /// A tape whose parameters do not require gradients; for inference.
    pub fn inference() -> Self {
        Self { track_params: false, ..Self::new() }
    }

    /// Test hook: corrupts the gradient propagated by every op named `op`.
    pub fn inject_fault(&mut self, op: impl Into<String>) {
        self.fault = Some(op.into());
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last [`Tape::backward`], if `v` received one.
    pub fn grad(&self, v: Var) -> Option<Tensor<S>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone()).expect("gradient shape"))
    }

    pub fn grad_data(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.0)?.as_deref()
    }

    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.params.get(&id).copied()
    }

    pub fn param_grad(&self, p: &Param<S>) -> Option<Tensor<S>> {
        self.grad(self.param_var(p.id())?)
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn leaf(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, p: &Param<S>) -> Var {
        if let Some(&v) = self.params.get(&p.id()) {
            return v;
        }
        let v = self.push(p.value().clone(), Op::Leaf, self.track_params);
        self.params.insert(p.id(), v);
        v
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let (out, patches) = conv2d_forward(
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            b.map(|b| &self.nodes[b.0].value),
            geom,
        )?;
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.any_grad(&deps);
        let patches = if rg && self.nodes[w.0].requires_grad { patches } else { None };
        Ok(self.push(out, Op::Conv2d { x, w, b, geom, patches }, rg))
    }

    pub fn maxpool2d(&mut self, x: Var, k: usize, stride: usize, pad: usize) -> Result<Var> {
        let (out, argmax) = maxpool2d(&self.nodes[x.0].value, k, stride, pad)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::MaxPool { x, argmax }, rg))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let out = global_avg_pool(&self.nodes[x.0].value)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::GlobalAvgPool { x }, rg))
    }

    /// `x·W + b` for `x: N×F`, `W: F×G`, `b: G`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        let (&[n, f], &[wf, g]) = (xs, ws) else {
            return Err(Error::shape("dense", format!("expected N×F and F×G, got {xs:?} and {ws:?}")));
        };
        if f != wf {
            return Err(Error::shape("dense", format!("inner dimensions {f} and {wf} differ")));
        }
        if let Some(b) = b {
            if self.shape(b) != [g] {
                return Err(Error::shape("dense", format!("bias shape {:?}, expected [{g}]", self.shape(b))));
            }
        }
        let mut out = vec![S::zero(); n * g];
        super::conv::gemm_acc(n, f, g, self.value(x).data(), self.value(w).data(), &mut out);
        if let Some(b) = b {
            let bd = self.value(b).data();
            for row in out.chunks_exact_mut(g) {
                row.iter_mut().zip(bd).for_each(|(o, &bv)| *o = *o + bv);
            }
        }
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.any_grad(&deps);
        Ok(self.push(Tensor::new(vec![n, g], out)?, Op::Dense { x, w, b }, rg))
    }

    pub fn activate(&mut self, x: Var, kind: Activation) -> Var {
        let out = self.value(x).map(|v| kind.apply(v));
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Activation { x, kind }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activate(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activate(x, Activation::Sigmoid)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.activate(x, Activation::Silu)
    }

    /// Concatenates NCHW tensors along the channel axis, in order.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::shape("concat_channels", "no inputs"))?;
        let [n, _, h, w] = self.value(first).dims4("concat_channels")?;
        let mut c_total = 0;
        for &v in xs {
            let [vn, vc, vh, vw] = self.value(v).dims4("concat_channels")?;
            if (vn, vh, vw) != (n, h, w) {
                return Err(Error::shape(
                    "concat_channels",
                    format!("input {:?} does not match N,H,W of {:?}", self.shape(v), self.shape(first)),
                ));
            }
            c_total += vc;
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * c_total * plane);
        for b in 0..n {
            for &v in xs {
                let t = self.value(v);
                let c = t.shape()[1];
                data.extend_from_slice(&t.data()[b * c * plane..(b + 1) * c * plane]);
            }
        }
        let rg = self.any_grad(xs);
        Ok(self.push(Tensor::new(vec![n, c_total, h, w], data)?, Op::Concat { xs: xs.to_vec() }, rg))
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(x).slice_channels(start, len)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::SliceChannels { x, start }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Reshape { x }, rg))
    }

    /// Elementwise `a ∘ b`. `b` must have the rank of `a` with every extent
    /// either equal to `a`'s or 1; size-1 axes broadcast.
    pub fn binary(&mut self, a: Var, b: Var, op: BinaryOp) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let map = broadcast_map(av.shape(), bv.shape())?;
        let (ad, bd) = (av.data(), bv.data());
        let f = |x: S, y: S| match op {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
            BinaryOp::Div => x / y,
            BinaryOp::Min => x.min(y),
            BinaryOp::Max => x.max(y),
        };
        let data: Vec<S> = match &map {
            None => ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
            Some(m) => ad.iter().zip(m).map(|(&x, &j)| f(x, bd[j])).collect(),
        };
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Binary { a, b, op }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Div)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Min)
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Max)
    }

    /// `scale·x + shift`.
    pub fn affine(&mut self, x: Var, scale: S, shift: S) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Affine { x, scale }, rg)
    }

    pub fn scale(&mut self, x: Var, factor: S) -> Var {
        self.affine(x, factor, S::zero())
    }

    pub fn add_scalar(&mut self, x: Var, c: S) -> Var {
        self.affine(x, S::one(), c)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: S = self.value(x).data().iter().copied().sum();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel().max(1);
        let s = self.sum(x);
        self.scale(s, S::one() / S::of(n as f64))
    }

    /// Picks flat elements of `x` into a rank-1 tensor.
    pub fn gather(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let xd = self.value(x).data();
        if let Some(&bad) = indices.iter().find(|&&i| i >= xd.len()) {
            return Err(Error::shape("gather", format!("index {bad} out of range for {} elements", xd.len())));
        }
        let data = indices.iter().map(|&i| xd[i]).collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(vec![indices.len()], data)?, Op::Gather { x, indices: indices.to_vec() }, rg))
    }

    pub fn atan(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.atan());
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Atan { x }, rg)
    }

    /// Elementwise binary cross-entropy between `sigmoid(x)` and `target`,
    /// computed from logits as `max(x,0) − x·t + ln(1 + e^(−|x|))`.
    pub fn bce_with_logits(&mut self, x: Var, target: &[S]) -> Result<Var> {
        let xv = self.value(x);
        if xv.numel() != target.len() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("{} logits but {} targets", xv.numel(), target.len()),
            ));
        }
        let data = xv
            .data()
            .iter()
            .zip(target)
            .map(|(&l, &t)| l.max(S::zero()) - l * t + (S::one() + (-l.abs()).exp()).ln())
            .collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::BceWithLogits { x, target: target.to_vec() }, rg))
    }

    /// Reverse pass from a one-element `loss`. Gradients from a previous call
    /// are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let root = &self.nodes[loss.0].value;
        if root.numel() != 1 {
            return Err(Error::NonScalarLoss(root.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::one()]);
        for i in (0..=loss.0).rev() {
            let Some(mut g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if self.fault.as_deref() == Some(node.op.name()) {
                g.iter_mut().for_each(|v| *v = *v * S::of(1.1));
            }
            for dep in inputs(&node.op) {
                assert!(dep.0 < i, "tape lineage is not topologically ordered");
            }
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[S], grads: &mut [Option<Vec<S>>]) -> Result<()> {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].requires_grad;
        let mut with_grad = |v: Var, f: &mut dyn FnMut(&mut [S])| {
            if !wants(v) {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![S::zero(); nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom, patches } => {
                let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
                let p = patches.as_deref();
                let mut res = Ok(());
                with_grad(*x, &mut |gx| res = conv2d_backward(xv, wv, p, *geom, g, Some(gx), None, None));
                res?;
                let mut res = Ok(());
                with_grad(*w, &mut |gw| res = conv2d_backward(xv, wv, p, *geom, g, None, Some(gw), None));
                res?;
                if let Some(b) = b {
                    let mut res = Ok(());
                    with_grad(*b, &mut |gb| res = conv2d_backward(xv, wv, p, *geom, g, None, None, Some(gb)));
                    res?;
                }
            }
            Op::MaxPool { x, argmax } => with_grad(*x, &mut |gx| {
                for (&src, &gv) in argmax.iter().zip(g) {
                    gx[src] = gx[src] + gv;
                }
            }),
            Op::GlobalAvgPool { x } => {
                let [_, _, h, w] = nodes[x.0].value.dims4("global_avg_pool")?;
                let inv = S::one() / S::of((h * w) as f64);
                with_grad(*x, &mut |gx| {
                    for (plane, &gv) in gx.chunks_exact_mut(h * w).zip(g) {
                        plane.iter_mut().for_each(|v| *v = *v + gv * inv);
                    }
                });
            }
            Op::Dense { x, w, b } => {
                let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
                let (n, f, gdim) = (xv.shape()[0], xv.shape()[1], wv.shape()[1]);
                // dx = g·Wᵀ, dW = xᵀ·g
                with_grad(*x, &mut |gx| super::conv::gemm_abt_acc(n, gdim, f, g, wv.data(), gx));
                with_grad(*w, &mut |gw| super::conv::gemm_atb_acc(n, f, gdim, xv.data(), g, gw));
                if let Some(b) = b {
                    with_grad(*b, &mut |gb| {
                        for row in g.chunks_exact(gdim) {
                            gb.iter_mut().zip(row).for_each(|(d, &v)| *d = *d + v);
                        }
                    });
                }
            }
            Op::Activation { x, kind } => {
                let xd = nodes[x.0].value.data();
                with_grad(*x, &mut |gx| {
                    for ((d, &xv), &gv) in gx.iter_mut().zip(xd).zip(g) {
                        *d = *d + gv * kind.derivative(xv);
                    }
                });
            }
            Op::Concat { xs } => {
                let [n, c_total, h, w] = node.value.dims4("concat_channels")?;
                let plane = h * w;
                let mut offset = 0;
                for &v in xs {
                    let c = nodes[v.0].value.shape()[1];
                    with_grad(v, &mut |gv| {
                        for b in 0..n {
                            let src = &g[(b * c_total + offset) * plane..(b * c_total + offset + c) * plane];
                            let dst = &mut gv[b * c * plane..(b + 1) * c * plane];
                            dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
                        }
                    });
                    offset += c;
                }
            }
            Op::SliceChannels { x, start } => {
                let [n, c, h, w] = nodes[x.0].value.dims4("slice_channels")?;
                let len = node.value.shape()[1];
                let plane = h * w;
                with_grad(*x, &mut |gx| {
                    for b in 0..n {
                        let dst = &mut gx[(b * c + start) * plane..(b * c + start + len) * plane];
                        let src = &g[b * len * plane..(b + 1) * len * plane];
                        dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
                    }
                });
            }
            Op::Reshape { x } => with_grad(*x, &mut |gx| {
                gx.iter_mut().zip(g).for_each(|(d, &s)| *d = *d + s);
            }),
            Op::Binary { a, b, op } => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let map = broadcast_map(av.shape(), bv.shape())?;
                let (ad, bd) = (av.data(), bv.data());
                let bidx = |k: usize| map.as_ref().map_or(k, |m| m[k]);
                with_grad(*a, &mut |ga| {
                    for (k, d) in ga.iter_mut().enumerate() {
                        let (x, y) = (ad[k], bd[bidx(k)]);
                        let local = match op {
                            BinaryOp::Add | BinaryOp::Sub => S::one(),
                            BinaryOp::Mul => y,
                            BinaryOp::Div => S::one() / y,
                            BinaryOp::Min => bool_to(x <= y),
                            BinaryOp::Max => bool_to(x >= y),
                        };
                        *d = *d + g[k] * local;
                    }
                });
                with_grad(*b, &mut |gb| {
                    for (k, &gv) in g.iter().enumerate() {
                        let j = bidx(k);
                        let (x, y) = (ad[k], bd[j]);
                        let local = match op {
                            BinaryOp::Add => S::one(),
                            BinaryOp::Sub => -S::one(),
                            BinaryOp::Mul => x,
                            BinaryOp::Div => -x / (y * y),
                            BinaryOp::Min => bool_to(!(x <= y)),
                            BinaryOp::Max => bool_to(!(x >= y)),
                        };
                        gb[j] = gb[j] + gv * local;
                    }
                });
            }
            Op::Affine { x, scale } => with_grad(*x, &mut |gx| {
                gx.iter_mut().zip(g).for_each(|(d, &s)| *d = *d + s * *scale);
            }),
            Op::Sum { x } => with_grad(*x, &mut |gx| {
                gx.iter_mut().for_each(|d| *d = *d + g[0]);
            }),
            Op::Gather { x, indices } => with_grad(*x, &mut |gx| {
                for (&i, &gv) in indices.iter().zip(g) {
                    gx[i] = gx[i] + gv;
                }
            }),
            Op::Atan { x } => {
                let xd = nodes[x.0].value.data();
                with_grad(*x, &mut |gx| {
                    for ((d, &xv), &gv) in gx.iter_mut().zip(xd).zip(g) {
                        *d = *d + gv / (S::one() + xv * xv);
                    }
                });
            }
            Op::BceWithLogits { x, target } => {
                let xd = nodes[x.0].value.data();
                with_grad(*x, &mut |gx| {
                    for (((d, &l), &t), &gv) in gx.iter_mut().zip(xd).zip(target).zip(g) {
                        *d = *d + gv * (sigmoid(l) - t);
                    }
                });
            }
        }
        Ok(())
    }
}

#[inline]
fn bool_to<S: Scalar>(b: bool) -> S {
    if b {
        S::one()
    } else {
        S::zero()
    }
}

fn inputs<S>(op: &Op<S>) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::Conv2d { x, w, b, .. } | Op::Dense { x, w, b } => {
            let mut v = vec![*x, *w];
            v.extend(*b);
            v
        }
        Op::Concat { xs } => xs.clone(),
        Op::Binary { a, b, .. } => vec![*a, *b],
        Op::MaxPool { x, .. }
        | Op::GlobalAvgPool { x }
        | Op::Activation { x, .. }
        | Op::SliceChannels { x, .. }
        | Op::Reshape { x }
        | Op::Affine { x, .. }
        | Op::Sum { x }
        | Op::Gather { x, .. }
        | Op::Atan { x }
        | Op::BceWithLogits { x, .. } => vec![*x],
    }
}

/// For each flat index of `a`, the flat index of `b` it pairs with, or `None`
/// when the shapes are equal.
fn broadcast_map(a: &[usize], b: &[usize]) -> Result<Option<Vec<usize>>> {
    if a == b {
        return Ok(None);
    }
    if a.len() != b.len() || a.iter().zip(b).any(|(&x, &y)| y != x && y != 1) {
        return Err(Error::shape("elementwise", format!("cannot broadcast {b:?} against {a:?}")));
    }
    let rank = a.len();
    let mut bstride = vec![0; rank];
    let mut acc = 1;
    for i in (0..rank).rev() {
        bstride[i] = if b[i] == 1 { 0 } else { acc };
        acc *= b[i];
    }
    let numel: usize = a.iter().product();
    let mut map = Vec::with_capacity(numel);
    let mut idx = vec![0usize; rank];
    for _ in 0..numel {
        map.push(idx.iter().zip(&bstride).map(|(i, s)| i * s).sum());
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < a[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(Some(map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_fn([2, 3], |i| i as f64));
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert!(tape.grad(x).unwrap().data().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn square_gradient_is_twice_x() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_fn([4], |i| i as f64 - 1.5));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        let g = tape.grad(x).unwrap();
        for (gv, xv) in g.data().iter().zip(tape.value(x).data()) {
            assert_eq!(*gv, 2.0 * xv);
        }
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::ones([2]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn channel_broadcast_gradient_sums_over_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xt = Tensor::<f64>::uniform([2, 3, 2, 2], -1.0, 1.0, &mut rng);
        let st = Tensor::<f64>::uniform([2, 3, 1, 1], 0.1, 1.0, &mut rng);
        let upstream = Tensor::<f64>::uniform([2, 3, 2, 2], -1.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let x = tape.leaf(xt.clone());
        let s = tape.leaf(st.clone());
        let u = tape.constant(upstream.clone());
        let y = tape.mul(x, s).unwrap();
        let yu = tape.mul(y, u).unwrap();
        let loss = tape.sum(yu);
        tape.backward(loss).unwrap();
        let gs = tape.grad(s).unwrap();
        for n in 0..2 {
            for c in 0..3 {
                let mut expect = 0.0;
                for h in 0..2 {
                    for w in 0..2 {
                        expect += xt.at4(n, c, h, w) * upstream.at4(n, c, h, w);
                    }
                }
                assert!((gs.at4(n, c, 0, 0) - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn incompatible_broadcast_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::ones([1, 2, 2, 2]));
        let b = tape.leaf(Tensor::ones([1, 3, 1, 1]));
        assert!(matches!(tape.mul(a, b), Err(Error::Shape { .. })));
    }

    #[test]
    fn activations_at_reference_points() {
        assert_eq!(Activation::Sigmoid.apply(0.0f64), 0.5);
        assert_eq!(Activation::Relu.apply(-3.0f64), 0.0);
        assert_eq!(Activation::Relu.apply(3.0f64), 3.0);
        assert!((Activation::Silu.apply(1.0f64) - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert_eq!(Activation::Relu.derivative(0.0f64), 0.0);
    }

    #[test]
    fn dense_affine_map() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new([1, 2], vec![1., 1.]).unwrap());
        let w = tape.constant(Tensor::new([2, 1], vec![1., 1.]).unwrap());
        let b = tape.constant(Tensor::new([1], vec![1.]).unwrap());
        let y = tape.dense(x, w, Some(b)).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0]);
        let bad = tape.constant(Tensor::ones([3, 1]));
        assert!(tape.dense(x, bad, None).is_err());
    }

    #[test]
    fn fault_injection_alters_named_op_only() {
        let run = |fault: Option<&str>| {
            let mut tape = Tape::<f64>::new();
            if let Some(f) = fault {
                tape.inject_fault(f);
            }
            let x = tape.leaf(Tensor::from_fn([3], |i| i as f64));
            let y = tape.atan(x);
            let s = tape.sum(y);
            tape.backward(s).unwrap();
            tape.grad(x).unwrap()
        };
        assert_eq!(run(None), run(Some("dense")));
        assert_ne!(run(None), run(Some("atan")));
    }
}
