//! Labelled image datasets: MNIST IDX files and class-per-directory images.

mod idx;
mod image_dir;

pub use idx::{encode_idx_images, encode_idx_labels, load_mnist_idx, write_mnist_idx};
pub use image_dir::{bilinear_resize, load_image_dir};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    /// Not yet split.
    Full,
}

/// Same-shaped `C x H x W` images with class indices into `class_names`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(
        images: Vec<Tensor>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        split: Split,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if let Some(first) = images.first() {
            if first.rank() != 3 {
                return Err(Error::Shape(format!(
                    "images must be C x H x W, got {:?}",
                    first.shape()
                )));
            }
            if let Some(bad) = images.iter().find(|t| t.shape() != first.shape()) {
                return Err(Error::Shape(format!(
                    "images differ in shape: {:?} vs {:?}",
                    first.shape(),
                    bad.shape()
                )));
            }
        }
        Ok(Self {
            images,
            labels,
            class_names,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// `[C, H, W]` of every image; `None` when empty.
    pub fn image_shape(&self) -> Option<[usize; 3]> {
        self.images.first().map(|t| {
            let s = t.shape();
            [s[0], s[1], s[2]]
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Indices of the images of each class, in dataset order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    pub fn subset(&self, indices: &[usize], split: Split) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            split,
        }
    }

    /// The first `n` samples (or all of them when `n` exceeds the length).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            class_names: self.class_names.clone(),
            split: self.split,
        }
    }
}

/// Crops every image to a centred `H x W` window at offset
/// `floor((src - tgt) / 2)` per axis.
pub fn center_crop(ds: &LabeledDataset, target: (usize, usize)) -> Result<LabeledDataset> {
    let Some([c, h, w]) = ds.image_shape() else {
        return Ok(ds.clone());
    };
    if target.0 == 0 || target.1 == 0 || target.0 > h || target.1 > w {
        return Err(Error::Shape(format!(
            "cannot crop {h}x{w} images to {}x{}",
            target.0, target.1
        )));
    }
    let offset = [0, (h - target.0) / 2, (w - target.1) / 2];
    let images = ds
        .images
        .iter()
        .map(|t| t.crop(&offset, &[c, target.0, target.1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset {
        images,
        labels: ds.labels.clone(),
        class_names: ds.class_names.clone(),
        split: ds.split,
    })
}

/// Stratified split: each class is shuffled and `round(fraction * n)` of its
/// images (clamped to `1..n`) go to the training side. Both sides keep the
/// original dataset order.
pub fn split_train_test(
    ds: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!(
            "train fraction {fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in ds.indices_by_class().into_iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::Data(format!(
                "class {:?} has {} images, need at least 2 to split",
                ds.class_names[class],
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n_train = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train, Split::Train), ds.subset(&test, Split::Test)))
}
