use super::config::{MdrcPlacement, ModelConfig, NeckKind};
use crate::error::{Error, Result};
use crate::nn::{AaspBlock, C3Block, ConvBlock, ConvParams, Initializer, MdrcBlock, Module, Param, SppfBlock, SscaBlock};
use crate::tensor::{ConvGeometry, Scalar, Tape, Tensor, Var};

/// Stride-2 layer opening each stage.
#[derive(Clone, Debug)]
pub enum Downsample<S: Scalar = f32> {
    Conv(ConvBlock<S>),
    Mdrc(MdrcBlock<S>),
}

impl<S: Scalar> Downsample<S> {
    fn forward(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        match self {
            Downsample::Conv(c) => c.forward(tape, x),
            Downsample::Mdrc(m) => m.forward(tape, x),
        }
    }

    fn params(&self) -> Vec<&Param<S>> {
        match self {
            Downsample::Conv(c) => c.params(),
            Downsample::Mdrc(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        match self {
            Downsample::Conv(c) => c.params_mut(),
            Downsample::Mdrc(m) => m.params_mut(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Stage<S: Scalar = f32> {
    pub down: Downsample<S>,
    pub c3: C3Block<S>,
    /// Applied after `down` or after `c3`, whichever hosts the dilated block.
    pub ssca: Option<SscaBlock<S>>,
}

#[derive(Clone, Debug)]
pub enum Neck<S: Scalar = f32> {
    None,
    Sppf(SppfBlock<S>),
    Aasp(AaspBlock<S>),
}

/// Single-scale grid detector: stride-2 stages, optional neck and a 1×1
/// head emitting `5 + num_classes` channels per cell.
#[derive(Clone, Debug)]
pub struct DetectorModel<S: Scalar = f32> {
    pub config: ModelConfig,
    pub stages: Vec<Stage<S>>,
    pub neck: Neck<S>,
    pub head: ConvParams<S>,
}

impl<S: Scalar> DetectorModel<S> {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut init = Initializer::new(config.seed);
        let mdrc = config.variant.uses_mdrc();
        let in_conv = mdrc && config.mdrc_placement == MdrcPlacement::ConvLayers;
        let in_c3 = mdrc && config.mdrc_placement == MdrcPlacement::C3Layers;
        let mut stages = Vec::with_capacity(config.channels.len());
        let mut cin = 1;
        for &c in &config.channels {
            let down = if in_conv {
                Downsample::Mdrc(MdrcBlock::new(&mut init, cin, c, &config.dilations, 2)?)
            } else {
                Downsample::Conv(ConvBlock::same(&mut init, cin, c, 3, 2))
            };
            let c3 = C3Block::new(&mut init, c, c, 1, in_c3.then_some(config.dilations.as_slice()))?;
            let ssca = config.variant.uses_ssca().then(|| SscaBlock::new(&mut init, c));
            stages.push(Stage { down, c3, ssca });
            cin = c;
        }
        let neck = match config.variant.neck() {
            NeckKind::None => Neck::None,
            NeckKind::Sppf => Neck::Sppf(SppfBlock::new(&mut init, cin, cin)),
            NeckKind::Aasp => Neck::Aasp(AaspBlock::new(&mut init, cin, cin)),
        };
        let head = init.conv(cin, config.head_channels(), 1, ConvGeometry::pointwise());
        Ok(Self { config: config.clone(), stages, neck, head })
    }

    /// Raw head output `[N, 5 + C, G, G]` for input `[N, 1, H, W]`.
    pub fn forward(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        let shape = tape.shape(x);
        let size = self.config.image_size;
        if shape.len() != 4 || shape[1] != 1 || shape[2] != size || shape[3] != size {
            return Err(Error::shape("detector_forward", format!("expected [N, 1, {size}, {size}], got {shape:?}")));
        }
        let ssca_after_down = self.config.mdrc_placement == MdrcPlacement::ConvLayers;
        let mut h = x;
        for stage in &self.stages {
            h = stage.down.forward(tape, h)?;
            if let (Some(s), true) = (&stage.ssca, ssca_after_down) {
                h = s.forward(tape, h)?;
            }
            h = stage.c3.forward(tape, h)?;
            if let (Some(s), false) = (&stage.ssca, ssca_after_down) {
                h = s.forward(tape, h)?;
            }
        }
        h = match &self.neck {
            Neck::None => h,
            Neck::Sppf(b) => b.forward(tape, h)?,
            Neck::Aasp(b) => b.forward(tape, h)?,
        };
        self.head.forward(tape, h)
    }

    /// Forward pass without gradient tracking.
    pub fn infer(&self, images: Tensor<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::inference();
        let x = tape.constant(images);
        let y = self.forward(&mut tape, x)?;
        Ok(tape.value(y).clone())
    }
}

impl<S: Scalar> Module<S> for DetectorModel<S> {
    fn params(&self) -> Vec<&Param<S>> {
        let mut out = Vec::new();
        for s in &self.stages {
            out.extend(s.down.params());
            out.extend(s.c3.params());
            if let Some(a) = &s.ssca {
                out.extend(a.params());
            }
        }
        match &self.neck {
            Neck::None => {}
            Neck::Sppf(b) => out.extend(b.params()),
            Neck::Aasp(b) => out.extend(b.params()),
        }
        out.extend(self.head.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            out.extend(s.down.params_mut());
            out.extend(s.c3.params_mut());
            if let Some(a) = &mut s.ssca {
                out.extend(a.params_mut());
            }
        }
        match &mut self.neck {
            Neck::None => {}
            Neck::Sppf(b) => out.extend(b.params_mut()),
            Neck::Aasp(b) => out.extend(b.params_mut()),
        }
        out.extend(self.head.params_mut());
        out
    }
}
