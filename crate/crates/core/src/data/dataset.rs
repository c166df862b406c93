use std::path::Path;

use super::labels::read_labels;
use super::pgm::{read_pgm, GrayImage};
use super::split::{read_split, SplitName};
use crate::error::{Error, Result};
use crate::metrics::GroundTruth;
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 2;
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["object", "noise"];

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    pub image: GrayImage,
    pub boxes: Vec<GroundTruth>,
}

/// Reads `images/{id}.pgm` and `labels/{id}.txt`; the image must be square.
pub fn read_labeled_image(data_dir: &Path, id: &str, num_classes: usize) -> Result<LabeledImage> {
    let image = read_pgm(&data_dir.join("images").join(format!("{id}.pgm")))?;
    if image.width != image.height {
        return Err(Error::Data(format!("image {id} is {}x{}, expected square", image.width, image.height)));
    }
    let boxes = read_labels(&data_dir.join("labels").join(format!("{id}.txt")), image.width as f64, num_classes)?;
    Ok(LabeledImage { id: id.to_string(), image, boxes })
}

pub fn load_split(data_dir: &Path, split: SplitName, num_classes: usize) -> Result<Vec<LabeledImage>> {
    let ids = read_split(&data_dir.join("splits"), split)?;
    ids.iter().map(|id| read_labeled_image(data_dir, id, num_classes)).collect()
}

/// Stacks images into an `[N, 1, H, W]` tensor, each standardized to zero
/// mean and unit variance (flat images only have their mean removed).
pub fn batch_tensor(images: &[&LabeledImage]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::Data("empty batch".into()))?;
    let (w, h) = (first.image.width, first.image.height);
    let mut data = Vec::with_capacity(images.len() * w * h);
    for img in images {
        if (img.image.width, img.image.height) != (w, h) {
            return Err(Error::Data(format!("image {} size differs from {}", img.id, first.id)));
        }
        data.extend(standardize(&img.image.pixels));
    }
    Tensor::new(vec![images.len(), 1, h, w], data)
}

fn standardize(px: &[f32]) -> impl Iterator<Item = f32> + '_ {
    let n = px.len().max(1) as f64;
    let mean = px.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = px.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let inv = if var > 1e-12 { 1.0 / var.sqrt() } else { 1.0 };
    px.iter().map(move |&v| ((v as f64 - mean) * inv) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(px: Vec<f32>) -> LabeledImage {
        LabeledImage { id: "a".into(), image: GrayImage { width: 2, height: 2, pixels: px }, boxes: vec![] }
    }

    #[test]
    fn batches_are_standardized() {
        let a = img(vec![0.0, 0.2, 0.4, 0.6]);
        let flat = img(vec![0.5; 4]);
        let t = batch_tensor(&[&a, &flat]).unwrap();
        assert_eq!(t.shape(), &[2, 1, 2, 2]);
        let first = &t.data()[..4];
        assert!(first.iter().sum::<f32>().abs() < 1e-6);
        assert!((first.iter().map(|v| v * v).sum::<f32>() / 4.0 - 1.0).abs() < 1e-5);
        assert_eq!(&t.data()[4..], &[0.0; 4]);
        assert!(batch_tensor(&[]).is_err());
    }
}
