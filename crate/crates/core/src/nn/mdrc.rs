//! Multi-scale dilated residual convolution.
//!
//! One 3×3 branch per dilation rate `d` (padding `d`, so every branch keeps
//! the same spatial extent), channel concatenation, a 1×1 fuse back to `c2`
//! channels, and an identity shortcut when the block preserves shape.

use super::{check_channels, ConvBlock, Initializer, Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{ConvGeometry, Scalar, Tape, Var};

pub const BRANCH_KERNEL: usize = 3;

#[derive(Clone, Debug)]
pub struct MdrcBlock<S: Scalar = f32> {
    c1: usize,
    c2: usize,
    stride: usize,
    dilations: Vec<usize>,
    pub branches: Vec<ConvBlock<S>>,
    pub fuse: ConvBlock<S>,
}

impl<S: Scalar> MdrcBlock<S> {
    pub fn new(init: &mut Initializer, c1: usize, c2: usize, dilations: &[usize], stride: usize) -> Result<Self> {
        if dilations.is_empty() || dilations.contains(&0) {
            return Err(Error::Config(format!("MDRC dilations must be non-empty and positive, got {dilations:?}")));
        }
        if stride == 0 || c1 == 0 || c2 == 0 {
            return Err(Error::Config(format!("MDRC needs positive channels and stride, got {c1}->{c2} s{stride}")));
        }
        let branches = dilations
            .iter()
            .map(|&d| {
                let geom = ConvGeometry::new(stride, d, d * (BRANCH_KERNEL - 1) / 2);
                ConvBlock::new(init, c1, c2, BRANCH_KERNEL, geom)
            })
            .collect();
        let fuse = ConvBlock::new(init, dilations.len() * c2, c2, 1, ConvGeometry::pointwise());
        Ok(Self { c1, c2, stride, dilations: dilations.to_vec(), branches, fuse })
    }

    /// The identity shortcut is active only when input and output shapes agree.
    pub fn residual(&self) -> bool {
        self.c1 == self.c2 && self.stride == 1
    }

    pub fn dilations(&self) -> &[usize] {
        &self.dilations
    }

    pub fn in_channels(&self) -> usize {
        self.c1
    }

    pub fn out_channels(&self) -> usize {
        self.c2
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn forward(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        check_channels(tape, x, self.c1, "mdrc_forward")?;
        let outs = self.branches.iter().map(|b| b.forward(tape, x)).collect::<Result<Vec<_>>>()?;
        let cat = tape.concat_channels(&outs)?;
        let fused = self.fuse.forward(tape, cat)?;
        if self.residual() {
            tape.add(x, fused)
        } else {
            Ok(fused)
        }
    }
}

impl<S: Scalar> Module<S> for MdrcBlock<S> {
    fn params(&self) -> Vec<&Param<S>> {
        self.branches.iter().flat_map(|b| b.params()).chain(self.fuse.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let mut out: Vec<&mut Param<S>> = self.branches.iter_mut().flat_map(|b| b.params_mut()).collect();
        out.extend(self.fuse.params_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{conv_output_extent, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zeroed_block_is_identity() {
        let mut init = Initializer::new(0);
        let mut block = MdrcBlock::<f64>::new(&mut init, 3, 3, &[2, 3], 1).unwrap();
        block.zero_params();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::uniform([2, 3, 7, 5], -4.0, 4.0, &mut rng);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = block.forward(&mut tape, xv).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn widening_block_has_no_shortcut() {
        let mut init = Initializer::new(1);
        let block = MdrcBlock::<f32>::new(&mut init, 4, 8, &[2, 3], 1).unwrap();
        assert!(!block.residual());
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones([1, 4, 16, 16]));
        let y = block.forward(&mut tape, x).unwrap();
        assert_eq!(tape.shape(y), &[1, 8, 16, 16]);
    }

    #[test]
    fn branches_share_extent() {
        for d in 1..=4 {
            for h in 4..=32 {
                for stride in [1, 2] {
                    let g = ConvGeometry::new(stride, d, d);
                    let plain = conv_output_extent(h, 1, ConvGeometry::new(stride, 1, 0)).unwrap();
                    assert_eq!(conv_output_extent(h, BRANCH_KERNEL, g).unwrap(), plain, "d={d} h={h}");
                }
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch_and_bad_dilations() {
        let mut init = Initializer::new(2);
        assert!(MdrcBlock::<f32>::new(&mut init, 2, 2, &[], 1).is_err());
        assert!(MdrcBlock::<f32>::new(&mut init, 2, 2, &[0, 2], 1).is_err());
        let block = MdrcBlock::<f32>::new(&mut init, 2, 2, &[2], 1).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones([1, 3, 8, 8]));
        assert!(matches!(block.forward(&mut tape, x), Err(Error::Shape { .. })));
    }
}
