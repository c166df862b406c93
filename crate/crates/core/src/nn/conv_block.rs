use super::{ConvParams, Initializer, Module, Param};
use crate::error::Result;
use crate::tensor::{Activation, ConvGeometry, Scalar, Tape, Var};

/// Convolution, bias and activation (SiLU unless stated otherwise).
#[derive(Clone, Debug)]
pub struct ConvBlock<S: Scalar = f32> {
    pub conv: ConvParams<S>,
    pub activation: Activation,
}

impl<S: Scalar> ConvBlock<S> {
    pub fn new(init: &mut Initializer, cin: usize, cout: usize, k: usize, geom: ConvGeometry) -> Self {
        Self { conv: init.conv(cin, cout, k, geom), activation: Activation::Silu }
    }

    /// `k×k`, stride `stride`, padding `k/2`.
    pub fn same(init: &mut Initializer, cin: usize, cout: usize, k: usize, stride: usize) -> Self {
        Self::new(init, cin, cout, k, ConvGeometry::new(stride, 1, k / 2))
    }

    pub fn forward(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        let y = self.conv.forward(tape, x)?;
        Ok(tape.activate(y, self.activation))
    }

    pub fn in_channels(&self) -> usize {
        self.conv.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels()
    }
}

impl<S: Scalar> Module<S> for ConvBlock<S> {
    fn params(&self) -> Vec<&Param<S>> {
        self.conv.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        self.conv.params_mut()
    }
}
