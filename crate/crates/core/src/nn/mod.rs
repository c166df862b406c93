//! Architectural blocks: conv units, multi-scale dilated residual convolution,
//! attention-aided spatial pooling with squeeze-excitation, simplified
//! spatial/channel attention, SPPF and C3.

mod aasp;
mod c3;
mod conv_block;
mod mdrc;
mod se;
mod sppf;
mod ssca;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{ConvGeometry, Scalar, Tape, Tensor, Var};
use crate::error::Result;

pub use aasp::AaspBlock;
pub use c3::{Bottleneck, BottleneckBody, C3Block};
pub use conv_block::ConvBlock;
pub use mdrc::MdrcBlock;
pub use se::SeAttention;
pub use sppf::SppfBlock;
pub use ssca::SscaBlock;

/// Identity of a parameter within a process; used to bind it on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(u64);

static NEXT_PARAM: AtomicU64 = AtomicU64::new(0);

impl ParamId {
    fn fresh() -> Self {
        ParamId(NEXT_PARAM.fetch_add(1, Ordering::Relaxed))
    }
}

/// A trainable tensor.
#[derive(Debug)]
pub struct Param<S: Scalar = f32> {
    id: ParamId,
    value: Tensor<S>,
}

impl<S: Scalar> Clone for Param<S> {
    /// Clones receive a fresh identity so both copies can share a tape.
    fn clone(&self) -> Self {
        Self::new(self.value.clone())
    }
}

impl<S: Scalar> Param<S> {
    pub fn new(value: Tensor<S>) -> Self {
        Self { id: ParamId::fresh(), value }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn value(&self) -> &Tensor<S> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor<S> {
        &mut self.value
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn cast<T: Scalar>(&self) -> Param<T> {
        Param::new(self.value.cast())
    }
}

/// Anything that owns parameters, visited in a fixed order.
pub trait Module<S: Scalar> {
    fn params(&self) -> Vec<&Param<S>>;
    fn params_mut(&mut self) -> Vec<&mut Param<S>>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Sets every parameter element to zero.
    fn zero_params(&mut self) {
        for p in self.params_mut() {
            p.value_mut().data_mut().iter_mut().for_each(|v| *v = S::zero());
        }
    }
}

/// Seeded parameter factory: Kaiming-uniform fan-in weights, zero biases.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn kaiming<S: Scalar>(&mut self, shape: Vec<usize>, fan_in: usize) -> Tensor<S> {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let rng = &mut self.rng;
        Tensor::from_fn(shape, |_| S::of(rng.gen_range(-bound..bound)))
    }

    pub fn conv<S: Scalar>(&mut self, cin: usize, cout: usize, k: usize, geom: ConvGeometry) -> ConvParams<S> {
        let weight = self.kaiming(vec![cout, cin, k, k], cin * k * k);
        ConvParams { weight: Param::new(weight), bias: Param::new(Tensor::zeros([cout])), geom }
    }

    pub fn dense<S: Scalar>(&mut self, fin: usize, fout: usize) -> DenseParams<S> {
        let weight = self.kaiming(vec![fin, fout], fin);
        DenseParams { weight: Param::new(weight), bias: Param::new(Tensor::zeros([fout])) }
    }
}

/// Weight `(Cout, Cin, k, k)`, bias `(Cout)` and geometry of one convolution.
#[derive(Clone, Debug)]
pub struct ConvParams<S: Scalar = f32> {
    pub weight: Param<S>,
    pub bias: Param<S>,
    pub geom: ConvGeometry,
}

impl<S: Scalar> ConvParams<S> {
    pub fn in_channels(&self) -> usize {
        self.weight.value().shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value().shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.value().shape()[2]
    }

    pub fn forward(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        tape.conv2d(x, w, Some(b), self.geom)
    }

    pub fn cast<T: Scalar>(&self) -> ConvParams<T> {
        ConvParams { weight: self.weight.cast(), bias: self.bias.cast(), geom: self.geom }
    }
}

impl<S: Scalar> Module<S> for ConvParams<S> {
    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Fully connected layer: weight `(F, G)`, bias `(G)`.
#[derive(Clone, Debug)]
pub struct DenseParams<S: Scalar = f32> {
    pub weight: Param<S>,
    pub bias: Param<S>,
}

impl<S: Scalar> DenseParams<S> {
    pub fn forward(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        tape.dense(x, w, Some(b))
    }

    pub fn cast<T: Scalar>(&self) -> DenseParams<T> {
        DenseParams { weight: self.weight.cast(), bias: self.bias.cast() }
    }
}

impl<S: Scalar> Module<S> for DenseParams<S> {
    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub(crate) fn check_channels<S: Scalar>(tape: &Tape<S>, x: Var, expected: usize, op: &'static str) -> Result<()> {
    let [_, c, _, _] = tape.value(x).dims4(op)?;
    if c != expected {
        return Err(crate::error::Error::shape(op, format!("input has {c} channels, block expects {expected}")));
    }
    Ok(())
}

/// Half the width, at least one channel.
pub(crate) fn half_width(c: usize) -> usize {
    (c / 2).max(1)
}
