//! Multi-scale dilated residual convolutions, attention-aided spatial pooling
//! and simplified spatial/channel attention on a small reverse-mode autodiff
//! core, assembled into a single-band grid detector.
//!
//! - [`tensor`]: NCHW tensors, the autodiff [`tensor::Tape`], gradient checks.
//! - [`nn`]: the blocks (ConvBlock, MDRC, AaSP + SE, SSCA, SPPF, C3).
//! - [`detector`]: model variants, decode, target assignment, loss, NMS,
//!   training and checkpoints.
//! - [`metrics`]: IoU, matching, interpolated AP, mAP50 / mAP50-95.
//! - [`data`]: PGM images, normalized labels, splits, synthetic corpora.
//! - [`cli`]: the `dcap` command line.

pub mod cli;
pub mod data;
pub mod detector;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor, Var};
