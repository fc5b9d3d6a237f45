//! Binary test scenes: small shape masks placed on a canvas with dot noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A mask and the canvas offset of its top-left cell.
#[derive(Clone, Debug)]
pub struct PlacedShape {
    pub mask: Tensor,
    pub offset: (usize, usize),
}

impl PlacedShape {
    pub fn new(mask: Tensor, offset: (usize, usize)) -> Self {
        Self { mask, offset }
    }

    fn bounds(&self) -> (usize, usize, usize, usize) {
        let (r, c) = self.offset;
        (r, c, r + self.mask.shape()[0], c + self.mask.shape()[1])
    }
}

/// Places masks on a zero canvas, then sets each remaining cell to 1 with
/// probability `noise_density`. Mask bounding boxes must lie inside the
/// canvas and must not overlap.
///
/// One uniform draw is consumed per canvas cell in row-major order, so the
/// noise pattern depends only on the seed, the canvas size and the density.
pub fn make_noisy_scene(
    shapes: &[PlacedShape],
    canvas: (usize, usize),
    noise_density: f64,
    seed: u64,
) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&noise_density) {
        return Err(Error::Argument(format!(
            "noise density {noise_density} outside [0, 1]"
        )));
    }
    let mut scene = Tensor::zeros(&[canvas.0, canvas.1])?;
    let mut covered = vec![false; canvas.0 * canvas.1];
    for (i, shape) in shapes.iter().enumerate() {
        if shape.mask.rank() != 2 {
            return Err(Error::Argument(format!(
                "shape {i} mask must be 2D, got {:?}",
                shape.mask.shape()
            )));
        }
        let (r0, c0, r1, c1) = shape.bounds();
        if r1 > canvas.0 || c1 > canvas.1 {
            return Err(Error::Argument(format!(
                "shape {i} at {:?} does not fit canvas {canvas:?}",
                shape.offset
            )));
        }
        for (j, other) in shapes[..i].iter().enumerate() {
            let (q0, p0, q1, p1) = other.bounds();
            if r0 < q1 && q0 < r1 && c0 < p1 && p0 < c1 {
                return Err(Error::Argument(format!("shapes {j} and {i} overlap")));
            }
        }
        scene.embed(&shape.mask, &[r0, c0])?;
        let w = shape.mask.shape()[1];
        for (flat, &v) in shape.mask.data().iter().enumerate() {
            if v != 0.0 {
                covered[(r0 + flat / w) * canvas.1 + c0 + flat % w] = true;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (cell, value) in scene.data_mut().iter_mut().enumerate() {
        let dot = rng.gen::<f64>() < noise_density;
        if dot && !covered[cell] {
            *value = 1.0;
        }
    }
    Ok(scene)
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `sigma`.
pub fn add_gaussian_noise(signal: &Tensor, sigma: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    signal.map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
}

/// The 3x3 asymmetric L: a left column plus a bottom row, five cells.
pub fn l_shape_mask() -> Tensor {
    let cells = [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2)];
    Tensor::from_fn(&[3, 3], |i| {
        if cells.contains(&(i[0], i[1])) {
            1.0
        } else {
            0.0
        }
    })
    .expect("static shape")
}

/// Outline of an `n x n` square.
pub fn square_mask(n: usize) -> Tensor {
    Tensor::from_fn(&[n, n], |i| {
        let edge = i[0] == 0 || i[1] == 0 || i[0] == n - 1 || i[1] == n - 1;
        f64::from(u8::from(edge))
    })
    .expect("nonzero extent")
}

/// Outline of an isosceles triangle with its apex at the top centre and its
/// base along the bottom row of an `n x n` grid.
pub fn triangle_mask(n: usize) -> Tensor {
    let centre = (n as f64 - 1.0) / 2.0;
    let height = (n as f64 - 1.0).max(1.0);
    Tensor::from_fn(&[n, n], |i| {
        let (r, c) = (i[0] as f64, i[1] as f64);
        let half = centre * r / height;
        let on_side = (c - (centre - half)).abs() < 0.5 || (c - (centre + half)).abs() < 0.5;
        f64::from(u8::from(i[0] == n - 1 || on_side))
    })
    .expect("nonzero extent")
}

/// Ring of radius about `(n-1)/2` inside an `n x n` grid.
pub fn circle_mask(n: usize) -> Tensor {
    let centre = (n as f64 - 1.0) / 2.0;
    Tensor::from_fn(&[n, n], |i| {
        let d = ((i[0] as f64 - centre).powi(2) + (i[1] as f64 - centre).powi(2)).sqrt();
        f64::from(u8::from((d - centre).abs() < 0.5))
    })
    .expect("nonzero extent")
}
