//! Attention-aided spatial pooling.
//!
//! `x1 = conv1×1(x)`, `y1 = maxpool_k1(x1)`, `y2 = maxpool_k2(y1)`, then
//! `conv1×1(concat(x1, y1, y2))` recalibrated by squeeze-excitation. Pools
//! use stride 1 and `k/2` padding, so the spatial extent is preserved.

use super::{check_channels, half_width, ConvBlock, Initializer, Module, Param, SeAttention};
use crate::error::Result;
use crate::tensor::{ConvGeometry, Scalar, Tape, Var};

pub const AASP_POOL_KERNELS: (usize, usize) = (5, 9);

#[derive(Clone, Debug)]
pub struct AaspBlock<S: Scalar = f32> {
    c1: usize,
    c2: usize,
    pub pool_kernels: (usize, usize),
    pub reduce: ConvBlock<S>,
    pub fuse: ConvBlock<S>,
    pub se: SeAttention<S>,
}

impl<S: Scalar> AaspBlock<S> {
    pub fn new(init: &mut Initializer, c1: usize, c2: usize) -> Self {
        let ch = half_width(c1);
        Self {
            c1,
            c2,
            pool_kernels: AASP_POOL_KERNELS,
            reduce: ConvBlock::new(init, c1, ch, 1, ConvGeometry::pointwise()),
            fuse: ConvBlock::new(init, 3 * ch, c2, 1, ConvGeometry::pointwise()),
            se: SeAttention::new(init, c2),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.c1
    }

    pub fn out_channels(&self) -> usize {
        self.c2
    }

    /// Output of the pooling stage, before attention.
    pub fn pooled(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        check_channels(tape, x, self.c1, "aasp_forward")?;
        let (k1, k2) = self.pool_kernels;
        let x1 = self.reduce.forward(tape, x)?;
        let y1 = tape.maxpool2d(x1, k1, 1, k1 / 2)?;
        let y2 = tape.maxpool2d(y1, k2, 1, k2 / 2)?;
        let cat = tape.concat_channels(&[x1, y1, y2])?;
        self.fuse.forward(tape, cat)
    }

    pub fn forward(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        let fused = self.pooled(tape, x)?;
        self.se.forward(tape, fused)
    }
}

impl<S: Scalar> Module<S> for AaspBlock<S> {
    fn params(&self) -> Vec<&Param<S>> {
        self.reduce.params().into_iter().chain(self.fuse.params()).chain(self.se.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let mut out = self.reduce.params_mut();
        out.extend(self.fuse.params_mut());
        out.extend(self.se.params_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn preserves_extent() {
        let mut init = Initializer::new(3);
        let block = AaspBlock::<f32>::new(&mut init, 8, 8);
        for (h, w) in [(16, 16), (1, 1), (3, 7)] {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::ones([1, 8, h, w]));
            let y = block.forward(&mut tape, x).unwrap();
            assert_eq!(tape.shape(y), &[1, 8, h, w]);
        }
    }

    #[test]
    fn zero_se_halves_constant_fused_map() {
        let mut init = Initializer::new(6);
        let mut block = AaspBlock::<f64>::new(&mut init, 4, 4);
        block.se.zero_params();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full([1, 4, 5, 5], 0.3));
        let fused = block.pooled(&mut tape, x).unwrap();
        let y = block.forward(&mut tape, x).unwrap();
        let f = tape.value(fused).clone();
        assert_eq!(tape.value(y), &f.map(|v| 0.5 * v));
        // a constant input stays constant per channel through 1×1 convs and pools
        for c in 0..4 {
            let v0 = f.at4(0, c, 0, 0);
            assert!((0..25).all(|i| f.at4(0, c, i / 5, i % 5) == v0));
        }
    }
}
