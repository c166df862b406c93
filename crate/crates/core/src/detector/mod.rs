//! Grid detector assembled from the `nn` blocks: configuration, forward
//! pass, decoding, target assignment, loss, suppression, training and
//! checkpoints.

mod assign;
mod checkpoint;
mod config;
mod decode;
mod loss;
mod model;
mod nms;
mod train;

pub use assign::{assign_targets, AssignedCell, GridAssignment};
pub use checkpoint::{checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{MdrcPlacement, ModelConfig, NeckKind, Variant};
pub use decode::{decode, decode_box, encode_box};
pub use loss::{ciou, compute_loss, LossBreakdown, LossVars, BOX_WEIGHT, CLS_WEIGHT, OBJ_WEIGHT};
pub use model::{DetectorModel, Downsample, Neck, Stage};
pub use nms::{nms, NMS_CONF, NMS_IOU};
pub use train::{evaluate_model, predict, train, Sgd, TrainConfig, EVAL_CONF, EVAL_IOU};
