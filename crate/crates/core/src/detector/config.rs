use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Base,
    Mdrc,
    Aasp,
    Dcap,
    MdrcSsca,
    Spp,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::Base, Variant::Mdrc, Variant::Aasp, Variant::Dcap, Variant::MdrcSsca, Variant::Spp];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Mdrc => "mdrc",
            Variant::Aasp => "aasp",
            Variant::Dcap => "dcap",
            Variant::MdrcSsca => "mdrc_ssca",
            Variant::Spp => "spp",
        }
    }

    pub fn uses_mdrc(self) -> bool {
        matches!(self, Variant::Mdrc | Variant::Dcap | Variant::MdrcSsca)
    }

    pub fn uses_ssca(self) -> bool {
        self == Variant::MdrcSsca
    }

    pub fn neck(self) -> NeckKind {
        match self {
            Variant::Aasp | Variant::Dcap => NeckKind::Aasp,
            Variant::Spp => NeckKind::Sppf,
            _ => NeckKind::None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}` (base|mdrc|aasp|dcap|mdrc_ssca|spp)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeckKind {
    None,
    Sppf,
    Aasp,
}

/// Where multi-scale dilated blocks go when the variant uses them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MdrcPlacement {
    /// Replace the downsampling convolutions (stem included).
    ConvLayers,
    /// Replace the 3×3 conv inside every C3 bottleneck.
    C3Layers,
}

impl MdrcPlacement {
    pub fn as_str(self) -> &'static str {
        match self {
            MdrcPlacement::ConvLayers => "conv_layers",
            MdrcPlacement::C3Layers => "c3_layers",
        }
    }
}

impl fmt::Display for MdrcPlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MdrcPlacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv_layers" => Ok(MdrcPlacement::ConvLayers),
            "c3_layers" => Ok(MdrcPlacement::C3Layers),
            other => Err(Error::Config(format!("unknown mdrc_placement `{other}` (conv_layers|c3_layers)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub dilations: Vec<usize>,
    pub mdrc_placement: MdrcPlacement,
    /// Output width of each stride-2 stage.
    pub channels: Vec<usize>,
    pub num_classes: usize,
    pub image_size: usize,
    pub anchor: (f64, f64),
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Dcap,
            dilations: vec![2, 3],
            mdrc_placement: MdrcPlacement::ConvLayers,
            channels: vec![8, 16, 32],
            num_classes: 2,
            image_size: 64,
            anchor: (16.0, 16.0),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self { variant, ..Self::default() }
    }

    pub fn stride(&self) -> usize {
        1 << self.channels.len()
    }

    pub fn grid_size(&self) -> usize {
        self.image_size / self.stride()
    }

    /// Channels per head cell: `tx, ty, tw, th, obj`, then one per class.
    pub fn head_channels(&self) -> usize {
        5 + self.num_classes
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad(format!("channels must be non-empty and positive, got {:?}", self.channels));
        }
        if self.channels.len() > 6 {
            return bad(format!("at most 6 stages are supported, got {}", self.channels.len()));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return bad(format!("dilations must be non-empty and positive, got {:?}", self.dilations));
        }
        if self.num_classes == 0 {
            return bad("num_classes must be positive".into());
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(self.stride()) {
            return bad(format!("image_size {} is not divisible by stride {}", self.image_size, self.stride()));
        }
        if !(self.anchor.0 > 0.0 && self.anchor.1 > 0.0) {
            return bad(format!("anchor must be positive, got {:?}", self.anchor));
        }
        Ok(())
    }

    /// Architecture description, one `key=value` per line. The seed is
    /// omitted: it only affects initialization.
    pub fn canonical(&self) -> String {
        let join = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let (dilations, placement) = if self.variant.uses_mdrc() {
            (join(&self.dilations), self.mdrc_placement.to_string())
        } else {
            ("-".to_string(), "-".to_string())
        };
        format!(
            "variant={}\ndilations={}\nmdrc_placement={}\nchannels={}\nnum_classes={}\nimage_size={}\nanchor={},{}\n",
            self.variant,
            dilations,
            placement,
            join(&self.channels),
            self.num_classes,
            self.image_size,
            self.anchor.0,
            self.anchor.1
        )
    }

    /// First 8 bytes of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> [u8; 8] {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].try_into().expect("digest is 32 bytes")
    }
}
