//! Dense row-major `f64` arrays of rank 1 to 4.
//!
//! A [`Tensor`] carries signals, kernels, feature maps and gradients alike.
//! Shapes are checked at construction; there is no broadcasting and no
//! strided view, every tensor owns a contiguous buffer.

use crate::error::{Error, Result};

pub const MAX_RANK: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::Shape(format!(
            "rank must be between 1 and {MAX_RANK}, got shape {shape:?}"
        )));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_shape(shape)?;
        let mut index = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&index));
            for axis in (0..shape.len()).rev() {
                index[axis] += 1;
                if index[axis] < shape[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major flat offset of a multi-index. Panics when out of bounds.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(
            index.len(),
            self.shape.len(),
            "index rank does not match tensor rank"
        );
        let mut flat = 0;
        for (&i, &n) in index.iter().zip(&self.shape) {
            assert!(i < n, "index {index:?} out of bounds for {:?}", self.shape);
            flat = flat * n + i;
        }
        flat
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.shape.len()];
        for axis in (0..self.shape.len()).rev() {
            index[axis] = flat % self.shape[axis];
            flat /= self.shape[axis];
        }
        index
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let at = self.offset(index);
        self.data[at] = value;
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    /// Reverses every axis: `out[i, j, ..] = in[N-1-i, M-1-j, ..]`.
    ///
    /// In row-major order this is exactly a reversal of the flat buffer.
    pub fn reverse_all_axes(&self) -> Self {
        let mut data = self.data.clone();
        data.reverse();
        Self {
            shape: self.shape.clone(),
            data,
        }
    }

    /// Coordinates and value of the maximum; ties go to the lowest row-major index.
    pub fn argmax_flat(&self) -> (Vec<usize>, f64) {
        let (at, value) = argmax_slice(&self.data);
        (self.unravel(at), value)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += factor * other`, in place.
    pub fn add_scaled(&mut self, other: &Tensor, factor: f64) -> Result<()> {
        self.expect_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn expect_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Copies the block `[offset, offset + extent)` into a new tensor of the same rank.
    pub fn crop(&self, offset: &[usize], extent: &[usize]) -> Result<Self> {
        self.check_block(offset, extent)?;
        Self::from_fn(extent, |idx| {
            let src: Vec<usize> = idx.iter().zip(offset).map(|(i, o)| i + o).collect();
            self.get(&src)
        })
    }

    /// Writes `patch` into `self` with its origin at `offset`.
    pub fn embed(&mut self, patch: &Tensor, offset: &[usize]) -> Result<()> {
        self.check_block(offset, &patch.shape)?;
        for (flat, &v) in patch.data.iter().enumerate() {
            let dst: Vec<usize> = patch
                .unravel(flat)
                .iter()
                .zip(offset)
                .map(|(i, o)| i + o)
                .collect();
            self.set(&dst, v);
        }
        Ok(())
    }

    fn check_block(&self, offset: &[usize], extent: &[usize]) -> Result<()> {
        if offset.len() != self.rank() || extent.len() != self.rank() {
            return Err(Error::Shape(format!(
                "block rank mismatch: offset {offset:?}, extent {extent:?}, tensor {:?}",
                self.shape
            )));
        }
        for axis in 0..self.rank() {
            if extent[axis] == 0 || offset[axis] + extent[axis] > self.shape[axis] {
                return Err(Error::Shape(format!(
                    "block at {offset:?} of extent {extent:?} exceeds tensor {:?}",
                    self.shape
                )));
            }
        }
        Ok(())
    }

    /// Stacks same-shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("cannot stack an empty list".into()))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(items.len() * first.len());
        for t in items {
            first.expect_same_shape(t)?;
            data.extend_from_slice(&t.data);
        }
        Self::from_vec(&shape, data)
    }

    /// Sub-tensor at position `i` of the leading axis.
    pub fn slice_outer(&self, i: usize) -> Result<Self> {
        if self.rank() < 2 || i >= self.shape[0] {
            return Err(Error::Shape(format!(
                "cannot take outer slice {i} of {:?}",
                self.shape
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        Self::from_vec(
            &self.shape[1..],
            self.data[i * inner..(i + 1) * inner].to_vec(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Index and value of the first maximum of a nonempty slice.
pub(crate) fn argmax_slice(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    (best, values[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_examples() {
        assert_eq!(Tensor::zeros(&[2, 2]).unwrap().data(), &[0.0; 4]);
        assert_eq!(Tensor::zeros(&[3]).unwrap().data(), &[0.0; 3]);
        let t = Tensor::zeros(&[1, 1, 1]).unwrap();
        assert_eq!(t.shape(), &[1, 1, 1]);
        assert_eq!(t.data(), &[0.0]);
    }

    #[test]
    fn zero_extent_and_bad_rank_are_shape_errors() {
        assert!(matches!(Tensor::zeros(&[2, 0]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::zeros(&[]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::zeros(&[1; 5]), Err(Error::Shape(_))));
        assert!(matches!(
            Tensor::from_vec(&[2, 2], vec![1.0; 3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn reverse_examples() {
        let t = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.reverse_all_axes().data(), &[3.0, 2.0, 1.0]);
        let t = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.reverse_all_axes().data(), &[4.0, 3.0, 2.0, 1.0]);
        let ones = Tensor::full(&[3, 3], 1.0).unwrap();
        assert_eq!(ones.reverse_all_axes(), ones);
    }

    #[test]
    fn reverse_matches_index_definition() {
        let t = Tensor::from_fn(&[2, 3, 4], |i| (i[0] * 100 + i[1] * 10 + i[2]) as f64).unwrap();
        let r = t.reverse_all_axes();
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    assert_eq!(r.get(&[a, b, c]), t.get(&[1 - a, 2 - b, 3 - c]));
                }
            }
        }
    }

    #[test]
    fn argmax_examples() {
        let t = Tensor::from_vec(&[3], vec![0.0, 3.0, 3.0]).unwrap();
        assert_eq!(t.argmax_flat(), (vec![1], 3.0));
        let t = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 5.0, 0.0]).unwrap();
        assert_eq!(t.argmax_flat(), (vec![1, 0], 5.0));
        assert_eq!(Tensor::zeros(&[4]).unwrap().argmax_flat(), (vec![0], 0.0));
    }

    #[test]
    fn stack_and_slice() {
        let a = Tensor::full(&[2, 2], 1.0).unwrap();
        let b = Tensor::full(&[2, 2], 2.0).unwrap();
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2]);
        assert_eq!(s.slice_outer(1).unwrap(), b);
        assert!(Tensor::stack(&[a, Tensor::zeros(&[3]).unwrap()]).is_err());
    }

    fn arb_tensor() -> impl Strategy<Value = Tensor> {
        prop::collection::vec(1usize..5, 1..=4).prop_flat_map(|shape| {
            let len: usize = shape.iter().product();
            prop::collection::vec(-10.0f64..10.0, len)
                .prop_map(move |data| Tensor::from_vec(&shape, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn reverse_is_an_involution(t in arb_tensor()) {
            prop_assert_eq!(t.reverse_all_axes().reverse_all_axes(), t);
        }

        #[test]
        fn argmax_agrees_with_exhaustive_scan(t in arb_tensor()) {
            let (idx, value) = t.argmax_flat();
            prop_assert_eq!(t.get(&idx), value);
            prop_assert!(t.data().iter().all(|&v| v <= value));
            let first = t.data().iter().position(|&v| v == value).unwrap();
            prop_assert_eq!(t.offset(&idx), first);
        }

        #[test]
        fn crop_then_embed_is_identity_on_region(
            (t, off, ext) in arb_tensor().prop_flat_map(|t| {
                let shape = t.shape().to_vec();
                let off = shape.iter().map(|&n| 0..n).collect::<Vec<_>>();
                (Just(t), off)
            }).prop_flat_map(|(t, off)| {
                let ext = t.shape().iter().zip(&off).map(|(&n, &o)| 1..=n - o).collect::<Vec<_>>();
                (Just(t), Just(off), ext)
            })
        ) {
            let patch = t.crop(&off, &ext).unwrap();
            let mut canvas = Tensor::zeros(t.shape()).unwrap();
            canvas.embed(&patch, &off).unwrap();
            prop_assert_eq!(canvas.crop(&off, &ext).unwrap(), patch);
        }
    }
}
