use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::netpbm;
use crate::tensor::Tensor;

use super::{LabeledDataset, Split};

/// Bilinear resampling of a `C x H x W` tensor with half-pixel centres.
pub fn bilinear_resize(t: &Tensor, target: (usize, usize)) -> Result<Tensor> {
    let (c, h, w) = match *t.shape() {
        [c, h, w] => (c, h, w),
        _ => return Err(Error::Shape(format!("resize expects C x H x W, got {:?}", t.shape()))),
    };
    if target.0 == 0 || target.1 == 0 {
        return Err(Error::Shape("resize target must be nonzero".into()));
    }
    let sample = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let pos = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5)
            .clamp(0.0, (src_len - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(src_len - 1);
        (lo, hi, pos - lo as f64)
    };
    let rows: Vec<_> = (0..target.0).map(|y| sample(y, h, target.0)).collect();
    let cols: Vec<_> = (0..target.1).map(|x| sample(x, w, target.1)).collect();
    let src = t.data();
    Tensor::from_fn(&[c, target.0, target.1], |i| {
        let (y0, y1, fy) = rows[i[1]];
        let (x0, x1, fx) = cols[i[2]];
        let at = |y: usize, x: usize| src[(i[0] * h + y) * w + x];
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
        let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

fn decode_rgb(path: &Path) -> Result<Tensor> {
    let is_pnm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "ppm" | "pgm" | "pnm"));
    let (width, height, rgb) = if is_pnm {
        let r = netpbm::read(path)?;
        let rgb = if r.channels == 3 {
            r.pixels
        } else {
            r.pixels.iter().flat_map(|&v| [v, v, v]).collect()
        };
        (r.width, r.height, rgb)
    } else {
        let img = image::open(path).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        (rgb.width() as usize, rgb.height() as usize, rgb.into_raw())
    };
    let plane = width * height;
    Tensor::from_fn(&[3, height, width], |i| {
        f64::from(rgb[(i[1] * width + i[2]) * 3 + i[0]]) / 255.0
    })
    .map_err(|_| Error::Decode {
        path: path.to_path_buf(),
        reason: format!("empty raster ({plane} pixels)"),
    })
}

fn class_dir(root: &Path, class: &str) -> Result<PathBuf> {
    let exact = root.join(class);
    if exact.is_dir() {
        return Ok(exact);
    }
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() && entry.file_name().to_string_lossy().eq_ignore_ascii_case(class) {
            return Ok(entry.path());
        }
    }
    Err(Error::Data(format!(
        "missing class directory {class:?} under {root:?}"
    )))
}

/// Loads `root/<class>/*` for each selected class as `3 x H x W` images in
/// `[0, 1]`, resized to `target`. Classes are ordered alphabetically and
/// files by name; hidden files are skipped.
pub fn load_image_dir(
    root: &Path,
    selected_classes: &[String],
    target: (usize, usize),
) -> Result<LabeledDataset> {
    if selected_classes.is_empty() {
        return Err(Error::Argument("no classes selected".into()));
    }
    let mut classes = selected_classes.to_vec();
    classes.sort();
    classes.dedup();

    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (label, class) in classes.iter().enumerate() {
        let dir = class_dir(root, class)?;
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && !p
                        .file_name()
                        .is_some_and(|n| n.to_string_lossy().starts_with('.'))
            })
            .collect();
        if files.is_empty() {
            return Err(Error::Data(format!("class directory {dir:?} is empty")));
        }
        files.sort();
        for file in files {
            let img = decode_rgb(&file)?;
            let img = if img.shape()[1..] == [target.0, target.1] {
                img
            } else {
                bilinear_resize(&img, target)?
            };
            images.push(img);
            labels.push(label);
        }
    }
    LabeledDataset::new(images, labels, classes, Split::Full)
}
