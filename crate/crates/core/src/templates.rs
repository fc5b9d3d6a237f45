//! Pre-defined matched-filter kernels built from training data.
//!
//! A class-mean kernel is the pixelwise average of every training image of a
//! class; correlating a test image with it scores how well the image matches
//! the class's average appearance. Patch-mean kernels do the same for small
//! local windows, for networks whose kernels are smaller than the image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::filtering::FilterBank;
use crate::netpbm::{rescale_to_u8, Raster};
use crate::tensor::Tensor;

/// How patch offsets are chosen for patch-mean kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchSampling {
    /// This many uniformly random valid offsets per image.
    Random { patches_per_image: usize },
    /// Every valid offset of every image.
    AllOffsets,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplateMode {
    ClassMean,
    PatchMean,
    Random,
}

impl std::str::FromStr for TemplateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class_mean" | "template" => Ok(Self::ClassMean),
            "patch_mean" => Ok(Self::PatchMean),
            "random" => Ok(Self::Random),
            _ => Err(Error::Config(format!(
                "unknown template mode {s:?} (class_mean, patch_mean, random)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateSpec {
    pub mode: TemplateMode,
    /// `h x w`; channels follow the images.
    pub kernel_shape: (usize, usize),
    pub patches_per_image: usize,
    pub seed: u64,
}

impl TemplateSpec {
    /// Builds a bank of `count` kernels over images of shape `C x H x W`.
    pub fn build(&self, ds: &LabeledDataset, count: usize) -> Result<FilterBank> {
        if self.patches_per_image == 0 {
            return Err(Error::Argument("patches_per_image must be at least 1".into()));
        }
        let [c, h, w] = ds
            .image_shape()
            .ok_or_else(|| Error::Data("cannot build templates from an empty dataset".into()))?;
        let (kh, kw) = self.kernel_shape;
        if kh > h || kw > w {
            return Err(Error::Shape(format!(
                "kernel {kh}x{kw} does not fit {h}x{w} images"
            )));
        }
        match self.mode {
            TemplateMode::ClassMean => {
                if (kh, kw) != (h, w) {
                    return Err(Error::Shape(
                        "class-mean kernels must match the image size".into(),
                    ));
                }
                if count != ds.num_classes() {
                    return Err(Error::Argument(format!(
                        "class-mean bank has one kernel per class ({}), {count} requested",
                        ds.num_classes()
                    )));
                }
                class_mean_kernels(ds)
            }
            TemplateMode::PatchMean => patch_mean_bank(
                ds,
                count,
                self.kernel_shape,
                PatchSampling::Random {
                    patches_per_image: self.patches_per_image,
                },
                self.seed,
            ),
            TemplateMode::Random => {
                let labels = if count == ds.num_classes() {
                    ds.class_names.clone()
                } else {
                    (0..count).map(|i| format!("k{i}")).collect()
                };
                random_kernels(labels, &[c, kh, kw], self.seed)
            }
        }
    }
}

fn nonempty_classes(ds: &LabeledDataset) -> Result<Vec<Vec<usize>>> {
    let by_class = ds.indices_by_class();
    if let Some(k) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::Data(format!(
            "class {:?} has no training images",
            ds.class_names[k]
        )));
    }
    Ok(by_class)
}

/// One kernel per class: the arithmetic mean of that class's images.
pub fn class_mean_kernels(ds: &LabeledDataset) -> Result<FilterBank> {
    let by_class = nonempty_classes(ds)?;
    let shape = ds.image_shape().expect("nonempty classes imply images");
    let kernels = by_class
        .iter()
        .map(|members| {
            let mut acc = Tensor::zeros(&shape)?;
            for &i in members {
                acc.add_scaled(&ds.images[i], 1.0)?;
            }
            Ok(acc.scale(1.0 / members.len() as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    FilterBank::new(kernels, ds.class_names.clone())
}

/// One kernel per class: the mean of `h x w` patches taken from that class's images.
pub fn patch_mean_kernels(
    ds: &LabeledDataset,
    kernel_shape: (usize, usize),
    sampling: PatchSampling,
    seed: u64,
) -> Result<FilterBank> {
    patch_mean_bank(ds, ds.num_classes(), kernel_shape, sampling, seed)
}

/// `count` patch-mean kernels. Kernel `i` belongs to class `i % K`; when a
/// class owns `q > 1` kernels (`q <= 4`), its patches are split by the
/// quadrant of their offset within the valid offset range, quadrant `j`
/// feeding the class's kernel `j % q`. A cluster that received no patches
/// falls back to the mean over all of the class's patches.
pub fn patch_mean_bank(
    ds: &LabeledDataset,
    count: usize,
    (kh, kw): (usize, usize),
    sampling: PatchSampling,
    seed: u64,
) -> Result<FilterBank> {
    let by_class = nonempty_classes(ds)?;
    let [c, h, w] = ds.image_shape().expect("nonempty classes imply images");
    if kh == 0 || kw == 0 || kh > h || kw > w || (kh, kw) == (h, w) {
        return Err(Error::Shape(format!(
            "patch {kh}x{kw} must be strictly smaller than {h}x{w} images"
        )));
    }
    if let PatchSampling::Random { patches_per_image: 0 } = sampling {
        return Err(Error::Argument("patches_per_image must be at least 1".into()));
    }
    let classes = ds.num_classes();
    if count == 0 {
        return Err(Error::Argument("patch bank needs at least one kernel".into()));
    }
    let per_class = count.div_ceil(classes);
    if per_class > 4 {
        return Err(Error::Argument(format!(
            "{count} kernels over {classes} classes needs {per_class} clusters per class, at most 4 supported"
        )));
    }

    let (rows, cols) = (h - kh + 1, w - kw + 1);
    let quadrant = |top: usize, left: usize| usize::from(2 * top >= rows) * 2 + usize::from(2 * left >= cols);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = [c, kh, kw];
    // sums[class][cluster], plus a per-class total for fallback.
    let mut sums = vec![vec![(Tensor::zeros(&extent)?, 0usize); per_class]; classes];
    let mut totals = vec![(Tensor::zeros(&extent)?, 0usize); classes];
    for (class, members) in by_class.iter().enumerate() {
        for &i in members {
            let img = &ds.images[i];
            let offsets: Vec<(usize, usize)> = match sampling {
                PatchSampling::Random { patches_per_image } => (0..patches_per_image)
                    .map(|_| (rng.gen_range(0..rows), rng.gen_range(0..cols)))
                    .collect(),
                PatchSampling::AllOffsets => (0..rows)
                    .flat_map(|r| (0..cols).map(move |q| (r, q)))
                    .collect(),
            };
            for (top, left) in offsets {
                let patch = img.crop(&[0, top, left], &extent)?;
                let slot = &mut sums[class][quadrant(top, left) % per_class];
                slot.0.add_scaled(&patch, 1.0)?;
                slot.1 += 1;
                totals[class].0.add_scaled(&patch, 1.0)?;
                totals[class].1 += 1;
            }
        }
    }

    let mut kernels = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let (class, cluster) = (i % classes, i / classes);
        let (sum, n) = match &sums[class][cluster] {
            (_, 0) => &totals[class],
            slot => slot,
        };
        kernels.push(sum.scale(1.0 / *n as f64));
        labels.push(if per_class == 1 {
            ds.class_names[class].clone()
        } else {
            format!("{}/{cluster}", ds.class_names[class])
        });
    }
    FilterBank::new(kernels, labels)
}

/// Kernels drawn uniformly from `[-r, r]`, `r = 1/sqrt(fan_in)` with
/// `fan_in` the number of cells per kernel.
pub fn random_kernels(labels: Vec<String>, shape: &[usize], seed: u64) -> Result<FilterBank> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fan_in: usize = shape.iter().product();
    let r = 1.0 / (fan_in as f64).sqrt();
    let kernels = (0..labels.len())
        .map(|_| Tensor::from_fn(shape, |_| rng.gen_range(-r..=r)))
        .collect::<Result<Vec<_>>>()?;
    FilterBank::new(kernels, labels)
}

/// Tiles every kernel into one image, each normalised to its own min-max range.
///
/// Rank-2 and single-channel kernels become grey tiles and three-channel
/// kernels colour tiles, laid out on a near-square grid. Kernels with any
/// other channel count get one row per kernel and one grey tile per channel.
/// Tiles are separated by a one-pixel black border.
pub fn montage(bank: &FilterBank) -> Result<Raster> {
    let shape = bank.kernel_shape();
    let (channels, kh, kw) = match *shape {
        [h, w] => (1, h, w),
        [c, h, w] => (c, h, w),
        _ => return Err(Error::Shape(format!("cannot tile kernels of shape {shape:?}"))),
    };
    let n = bank.len();
    let (out_channels, grid_rows, grid_cols) = match channels {
        1 | 3 => {
            let cols = (n as f64).sqrt().ceil() as usize;
            (channels, n.div_ceil(cols), cols)
        }
        c => (1, n, c),
    };
    let width = grid_cols * (kw + 1) + 1;
    let height = grid_rows * (kh + 1) + 1;
    let mut pixels = vec![0u8; width * height * out_channels];
    let mut paint = |tile: usize, values: &[u8], depth: usize| {
        let (tr, tc) = (tile / grid_cols, tile % grid_cols);
        let plane = kh * kw;
        for ch in 0..depth {
            for y in 0..kh {
                for x in 0..kw {
                    let py = tr * (kh + 1) + 1 + y;
                    let px = tc * (kw + 1) + 1 + x;
                    pixels[(py * width + px) * depth + ch] = values[ch * plane + y * kw + x];
                }
            }
        }
    };
    for (k, kernel) in bank.kernels().iter().enumerate() {
        match channels {
            1 | 3 => paint(k, &rescale_to_u8(kernel.data()), channels),
            c => {
                let plane = kh * kw;
                for ch in 0..c {
                    let values = rescale_to_u8(&kernel.data()[ch * plane..(ch + 1) * plane]);
                    paint(k * c + ch, &values, 1);
                }
            }
        }
    }
    Ok(Raster {
        width,
        height,
        channels: out_channels,
        pixels,
    })
}
