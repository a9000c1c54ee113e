//! Images, preprocessing, synthetic data and dataset layout on disk.

pub mod io;
pub mod preprocess;
pub mod split;
pub mod synthetic;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::sampling::ExtentScore;
use crate::tensor::Tensor;

pub use io::{load_dataset, save_dataset, ImageFormat};
pub use preprocess::{bbox_intersection, preprocess, BinaryMask, CropBox, RawImage};
pub use split::{split_dataset, SplitSpec};
pub use synthetic::{generate_synthetic, SyntheticConfig};

/// A preprocessed `H x W x 1` image with its extent score.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    pub score: ExtentScore,
    pub pixels: Tensor,
}

/// Images plus the split into training group and test set.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<LabeledImage>,
    pub split: SplitSpec,
}

impl Dataset {
    /// Builds a dataset, splitting with `split_seed`.
    pub fn with_split(images: Vec<LabeledImage>, split_seed: u64) -> Result<Self> {
        let ids: Vec<String> = images.iter().map(|im| im.id.clone()).collect();
        let split = split_dataset(&ids, split_seed)?;
        Self::new(images, split)
    }

    pub fn new(images: Vec<LabeledImage>, split: SplitSpec) -> Result<Self> {
        let ds = Self { images, split };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        let Some(first) = self.images.first() else {
            return Err(Error::data("dataset has no images"));
        };
        let shape = first.pixels.shape().to_vec();
        if shape.len() != 3 || shape[2] != 1 {
            return Err(Error::data(format!("images must be HxWx1, got {shape:?}")));
        }
        let mut seen = HashMap::new();
        for im in &self.images {
            if im.pixels.shape() != shape.as_slice() {
                return Err(Error::data(format!(
                    "image {} is {:?}, expected {shape:?}",
                    im.id,
                    im.pixels.shape()
                )));
            }
            if !im.pixels.all_finite() {
                return Err(Error::data(format!("image {} has non-finite pixels", im.id)));
            }
            if seen.insert(im.id.as_str(), ()).is_some() {
                return Err(Error::data(format!("duplicate image id {}", im.id)));
            }
        }
        let split_total = self.split.train_ids.len() + self.split.val_ids.len() + self.split.test_ids.len();
        if split_total != self.images.len() {
            return Err(Error::data(format!(
                "split covers {split_total} ids but the dataset has {} images",
                self.images.len()
            )));
        }
        for id in self.split.train_group().iter().chain(&self.split.test_ids) {
            if !seen.contains_key(id.as_str()) {
                return Err(Error::data(format!("split names unknown image {id}")));
            }
        }
        Ok(())
    }

    /// `(height, width)` shared by all images.
    pub fn image_dims(&self) -> (usize, usize) {
        let s = self.images[0].pixels.shape();
        (s[0], s[1])
    }

    /// Images with the given ids, in that order.
    pub fn select(&self, ids: &[String]) -> Result<Vec<LabeledImage>> {
        let index: HashMap<&str, &LabeledImage> = self.images.iter().map(|im| (im.id.as_str(), im)).collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&im| im.clone())
                    .ok_or_else(|| Error::data(format!("unknown image id {id}")))
            })
            .collect()
    }

    pub fn test_images(&self) -> Result<Vec<LabeledImage>> {
        self.select(&self.split.test_ids)
    }
}

pub fn scores_of(images: &[LabeledImage]) -> Vec<ExtentScore> {
    images.iter().map(|im| im.score).collect()
}
