use super::{check_channels, half_width, ConvBlock, Initializer, Module, Param};
use crate::error::Result;
use crate::tensor::{ConvGeometry, Scalar, Tape, Var};

pub const SPPF_KERNEL: usize = 5;

/// Spatial pyramid pooling, fast form: three chained 5×5 stride-1 pools stand
/// in for parallel 5/9/13 pools.
#[derive(Clone, Debug)]
pub struct SppfBlock<S: Scalar = f32> {
    c1: usize,
    pub reduce: ConvBlock<S>,
    pub fuse: ConvBlock<S>,
}

impl<S: Scalar> SppfBlock<S> {
    pub fn new(init: &mut Initializer, c1: usize, c2: usize) -> Self {
        let ch = half_width(c1);
        Self {
            c1,
            reduce: ConvBlock::new(init, c1, ch, 1, ConvGeometry::pointwise()),
            fuse: ConvBlock::new(init, 4 * ch, c2, 1, ConvGeometry::pointwise()),
        }
    }

    pub fn forward(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        check_channels(tape, x, self.c1, "sppf_forward")?;
        let x1 = self.reduce.forward(tape, x)?;
        let mut maps = vec![x1];
        for _ in 0..3 {
            let last = *maps.last().expect("non-empty");
            maps.push(tape.maxpool2d(last, SPPF_KERNEL, 1, SPPF_KERNEL / 2)?);
        }
        let cat = tape.concat_channels(&maps)?;
        self.fuse.forward(tape, cat)
    }
}

impl<S: Scalar> Module<S> for SppfBlock<S> {
    fn params(&self) -> Vec<&Param<S>> {
        self.reduce.params().into_iter().chain(self.fuse.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let mut out = self.reduce.params_mut();
        out.extend(self.fuse.params_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{maxpool2d, Activation, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chained_pools_equal_wide_pools() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = Tensor::<f32>::uniform([1, 2, 11, 9], -1.0, 1.0, &mut rng);
        let mut chained = x.clone();
        for k in [5, 9, 13] {
            chained = maxpool2d(&chained, 5, 1, 2).unwrap().0;
            let direct = maxpool2d(&x, k, 1, k / 2).unwrap().0;
            assert_eq!(chained, direct, "k={k}");
        }
    }

    #[test]
    fn constant_input_with_zero_fuse_gives_bias() {
        let mut init = Initializer::new(3);
        let mut block = SppfBlock::<f64>::new(&mut init, 8, 8);
        block.fuse.conv.weight.value_mut().data_mut().fill(0.0);
        block.fuse.conv.bias.value_mut().data_mut().iter_mut().enumerate().for_each(|(i, b)| *b = i as f64 * 0.1);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full([1, 8, 16, 16], 0.7));
        let y = block.forward(&mut tape, x).unwrap();
        let out = tape.value(y);
        assert_eq!(out.shape(), &[1, 8, 16, 16]);
        for c in 0..8 {
            let expect = Activation::Silu.apply(c as f64 * 0.1);
            assert!((0..256).all(|i| out.at4(0, c, i / 16, i % 16) == expect));
        }
    }
}
