//! Cross-stage partial block with `n` bottlenecks. The bottleneck 3×3 conv
//! can be swapped for a multi-scale dilated block.

use super::{check_channels, half_width, ConvBlock, Initializer, MdrcBlock, Module, Param};
use crate::error::Result;
use crate::tensor::{ConvGeometry, Scalar, Tape, Var};

#[derive(Clone, Debug)]
pub enum BottleneckBody<S: Scalar = f32> {
    Conv(ConvBlock<S>),
    Mdrc(MdrcBlock<S>),
}

/// `x + body(conv1×1(x))`.
#[derive(Clone, Debug)]
pub struct Bottleneck<S: Scalar = f32> {
    pub reduce: ConvBlock<S>,
    pub body: BottleneckBody<S>,
}

impl<S: Scalar> Bottleneck<S> {
    fn new(init: &mut Initializer, c: usize, dilations: Option<&[usize]>) -> Result<Self> {
        let reduce = ConvBlock::new(init, c, c, 1, ConvGeometry::pointwise());
        let body = match dilations {
            Some(d) => BottleneckBody::Mdrc(MdrcBlock::new(init, c, c, d, 1)?),
            None => BottleneckBody::Conv(ConvBlock::same(init, c, c, 3, 1)),
        };
        Ok(Self { reduce, body })
    }

    fn forward(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        let h = self.reduce.forward(tape, x)?;
        let h = match &self.body {
            BottleneckBody::Conv(c) => c.forward(tape, h)?,
            BottleneckBody::Mdrc(m) => m.forward(tape, h)?,
        };
        tape.add(x, h)
    }
}

impl<S: Scalar> Module<S> for Bottleneck<S> {
    fn params(&self) -> Vec<&Param<S>> {
        let body = match &self.body {
            BottleneckBody::Conv(c) => c.params(),
            BottleneckBody::Mdrc(m) => m.params(),
        };
        self.reduce.params().into_iter().chain(body).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let mut out = self.reduce.params_mut();
        out.extend(match &mut self.body {
            BottleneckBody::Conv(c) => c.params_mut(),
            BottleneckBody::Mdrc(m) => m.params_mut(),
        });
        out
    }
}

#[derive(Clone, Debug)]
pub struct C3Block<S: Scalar = f32> {
    c1: usize,
    c2: usize,
    pub main: ConvBlock<S>,
    pub shortcut: ConvBlock<S>,
    pub bottlenecks: Vec<Bottleneck<S>>,
    pub fuse: ConvBlock<S>,
}

impl<S: Scalar> C3Block<S> {
    /// `mdrc_dilations = Some(..)` replaces every bottleneck 3×3 conv with a
    /// multi-scale dilated block using those rates.
    pub fn new(init: &mut Initializer, c1: usize, c2: usize, n: usize, mdrc_dilations: Option<&[usize]>) -> Result<Self> {
        let c = half_width(c2);
        let main = ConvBlock::new(init, c1, c, 1, ConvGeometry::pointwise());
        let shortcut = ConvBlock::new(init, c1, c, 1, ConvGeometry::pointwise());
        let bottlenecks = (0..n).map(|_| Bottleneck::new(init, c, mdrc_dilations)).collect::<Result<_>>()?;
        let fuse = ConvBlock::new(init, 2 * c, c2, 1, ConvGeometry::pointwise());
        Ok(Self { c1, c2, main, shortcut, bottlenecks, fuse })
    }

    pub fn in_channels(&self) -> usize {
        self.c1
    }

    pub fn out_channels(&self) -> usize {
        self.c2
    }

    pub fn hosts_mdrc(&self) -> bool {
        self.bottlenecks.iter().any(|b| matches!(b.body, BottleneckBody::Mdrc(_)))
    }

    pub fn forward(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        check_channels(tape, x, self.c1, "c3_forward")?;
        let mut a = self.main.forward(tape, x)?;
        for b in &self.bottlenecks {
            a = b.forward(tape, a)?;
        }
        let s = self.shortcut.forward(tape, x)?;
        let cat = tape.concat_channels(&[a, s])?;
        self.fuse.forward(tape, cat)
    }
}

impl<S: Scalar> Module<S> for C3Block<S> {
    fn params(&self) -> Vec<&Param<S>> {
        let mut out = self.main.params();
        out.extend(self.bottlenecks.iter().flat_map(|b| b.params()));
        out.extend(self.shortcut.params());
        out.extend(self.fuse.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let mut out = self.main.params_mut();
        out.extend(self.bottlenecks.iter_mut().flat_map(|b| b.params_mut()));
        out.extend(self.shortcut.params_mut());
        out.extend(self.fuse.params_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn output_shape() {
        let mut init = Initializer::new(1);
        for dil in [None, Some(&[2usize, 3][..])] {
            let block = C3Block::<f32>::new(&mut init, 4, 4, 1, dil).unwrap();
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::ones([1, 4, 8, 8]));
            let y = block.forward(&mut tape, x).unwrap();
            assert_eq!(tape.shape(y), &[1, 4, 8, 8]);
            assert_eq!(block.hosts_mdrc(), dil.is_some());
        }
    }

    #[test]
    fn channel_mismatch() {
        let mut init = Initializer::new(1);
        let block = C3Block::<f32>::new(&mut init, 4, 8, 1, None).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones([1, 3, 8, 8]));
        assert!(block.forward(&mut tape, x).is_err());
    }
}
