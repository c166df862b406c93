//! Single-band images and labels on disk, splits, and synthetic corpora.
//!
//! Corpus layout: `images/{id}.pgm`, `labels/{id}.txt`, `manifest.csv` and
//! `splits/{train,val,test}.txt`.

mod dataset;
mod labels;
mod pgm;
mod split;
mod synth;

pub use dataset::{batch_tensor, load_split, read_labeled_image, LabeledImage, CLASS_NAMES, NUM_CLASSES};
pub use labels::{
    cxcywh_to_xyxy, format_labels, parse_labels, read_labels, xyxy_to_cxcywh, YoloLabelLine, LABEL_SLACK,
};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm, GrayImage};
pub use split::{read_split, split_dataset, write_splits, Split, SplitName};
pub use synth::{render_instance, synth_generate, synth_image, InstanceKind, Manifest, ManifestEntry, Range, SynthSpec, MASK_THRESHOLD};
