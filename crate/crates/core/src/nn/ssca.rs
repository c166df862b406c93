//! Simplified spatial and channel attention:
//! `Ms = σ(conv7×7(X))` (N×1×H×W), `Mc = σ(conv1×1(avgpool(X)))` (N×C×1×1),
//! `Y = X ⊙ Ms ⊙ Mc`.

use super::{check_channels, ConvParams, Initializer, Module, Param};
use crate::error::Result;
use crate::tensor::{ConvGeometry, Scalar, Tape, Var};

pub const SPATIAL_KERNEL: usize = 7;

#[derive(Clone, Debug)]
pub struct SscaBlock<S: Scalar = f32> {
    channels: usize,
    pub spatial_conv: ConvParams<S>,
    pub channel_conv: ConvParams<S>,
}

impl<S: Scalar> SscaBlock<S> {
    pub fn new(init: &mut Initializer, channels: usize) -> Self {
        Self {
            channels,
            spatial_conv: init.conv(channels, 1, SPATIAL_KERNEL, ConvGeometry::new(1, 1, SPATIAL_KERNEL / 2)),
            channel_conv: init.conv(channels, channels, 1, ConvGeometry::pointwise()),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(Ms, Mc)`.
    pub fn attention_maps(&self, tape: &mut Tape<S>, x: Var) -> Result<(Var, Var)> {
        check_channels(tape, x, self.channels, "ssca_forward")?;
        let ms = self.spatial_conv.forward(tape, x)?;
        let ms = tape.sigmoid(ms);
        let pooled = tape.global_avg_pool(x)?;
        let mc = self.channel_conv.forward(tape, pooled)?;
        let mc = tape.sigmoid(mc);
        Ok((ms, mc))
    }

    pub fn forward(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        let (ms, mc) = self.attention_maps(tape, x)?;
        let y = tape.mul(x, ms)?;
        tape.mul(y, mc)
    }
}

impl<S: Scalar> Module<S> for SscaBlock<S> {
    fn params(&self) -> Vec<&Param<S>> {
        self.spatial_conv.params().into_iter().chain(self.channel_conv.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let mut out = self.spatial_conv.params_mut();
        out.extend(self.channel_conv.params_mut());
        out
    }
}
