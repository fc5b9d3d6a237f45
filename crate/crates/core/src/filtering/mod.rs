//! Matched filtering on discrete grids.
//!
//! All operations are valid-mode (no padding): a kernel of extent `h x w`
//! slid over an `H x W` signal with stride `c` yields
//! `(floor((H-h)/c)+1) x (floor((W-w)/c)+1)` responses.
//!
//! Cross-correlation computes `g(m, n) = sum_{a,b} s(a + c*m, b + c*n) * f(a, b)`.
//! Convolution with `h` is cross-correlation with `h` reversed along every
//! axis, so the matched filter for a pattern `f` is `reverse_all_axes(f)`.

mod scene;

pub use scene::{
    add_gaussian_noise, circle_mask, l_shape_mask, make_noisy_scene, square_mask, triangle_mask,
    PlacedShape,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{argmax_slice, Tensor};

/// Channel-summed valid cross-correlation on raw planes.
///
/// `signal` is `C x H x W`, `kernel` is `C x h x w`, both row-major. Each
/// output is accumulated channel by channel, then row by row, starting from
/// zero; `nn::conv_forward` relies on this exact order.
pub(crate) fn correlate_planes(
    signal: &[f64],
    (channels, height, width): (usize, usize, usize),
    kernel: &[f64],
    (kh, kw): (usize, usize),
    stride: usize,
) -> (Vec<f64>, usize, usize) {
    let out_h = (height - kh) / stride + 1;
    let out_w = (width - kw) / stride + 1;
    let mut out = vec![0.0; out_h * out_w];
    for m in 0..out_h {
        for n in 0..out_w {
            let mut acc = 0.0;
            for ch in 0..channels {
                let plane = &signal[ch * height * width..(ch + 1) * height * width];
                let taps = &kernel[ch * kh * kw..(ch + 1) * kh * kw];
                for a in 0..kh {
                    let row = &plane[(stride * m + a) * width + stride * n..][..kw];
                    let k_row = &taps[a * kw..(a + 1) * kw];
                    for (s, f) in row.iter().zip(k_row) {
                        acc += s * f;
                    }
                }
            }
            out[m * out_w + n] = acc;
        }
    }
    (out, out_h, out_w)
}

fn check_stride(stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::Argument("stride must be at least 1".into()));
    }
    Ok(())
}

fn check_fits(signal: &[usize], kernel: &[usize]) -> Result<()> {
    if signal.iter().zip(kernel).any(|(s, k)| k > s) {
        return Err(Error::Shape(format!(
            "kernel {kernel:?} does not fit signal {signal:?}"
        )));
    }
    Ok(())
}

fn expect_rank(t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::Shape(format!(
            "{what} must have rank {rank}, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Valid-mode 2D cross-correlation of an `H x W` signal with an `h x w` kernel.
pub fn correlate2d(signal: &Tensor, kernel: &Tensor, stride: usize) -> Result<Tensor> {
    expect_rank(signal, 2, "signal")?;
    expect_rank(kernel, 2, "kernel")?;
    check_stride(stride)?;
    check_fits(signal.shape(), kernel.shape())?;
    let (h, w) = (signal.shape()[0], signal.shape()[1]);
    let (kh, kw) = (kernel.shape()[0], kernel.shape()[1]);
    let (out, oh, ow) = correlate_planes(signal.data(), (1, h, w), kernel.data(), (kh, kw), stride);
    Tensor::from_vec(&[oh, ow], out)
}

/// Valid-mode 2D convolution: `g(m, n) = sum_{a,b} s(c*m + a, c*n + b) * k(h-1-a, w-1-b)`.
pub fn convolve2d(signal: &Tensor, kernel: &Tensor, stride: usize) -> Result<Tensor> {
    expect_rank(signal, 2, "signal")?;
    expect_rank(kernel, 2, "kernel")?;
    check_stride(stride)?;
    check_fits(signal.shape(), kernel.shape())?;
    let (h, w) = (signal.shape()[0], signal.shape()[1]);
    let (kh, kw) = (kernel.shape()[0], kernel.shape()[1]);
    let out_h = (h - kh) / stride + 1;
    let out_w = (w - kw) / stride + 1;
    let s = signal.data();
    let k = kernel.data();
    let mut out = vec![0.0; out_h * out_w];
    for m in 0..out_h {
        for n in 0..out_w {
            let mut acc = 0.0;
            for a in 0..kh {
                for b in 0..kw {
                    acc += s[(stride * m + a) * w + stride * n + b]
                        * k[(kh - 1 - a) * kw + (kw - 1 - b)];
                }
            }
            out[m * out_w + n] = acc;
        }
    }
    Tensor::from_vec(&[out_h, out_w], out)
}

/// Channel-summed cross-correlation of a `C x H x W` signal with a `C x h x w` kernel.
pub fn correlate_channels(signal: &Tensor, kernel: &Tensor, stride: usize) -> Result<Tensor> {
    expect_rank(signal, 3, "signal")?;
    expect_rank(kernel, 3, "kernel")?;
    check_stride(stride)?;
    if signal.shape()[0] != kernel.shape()[0] {
        return Err(Error::Shape(format!(
            "channel mismatch: signal {:?}, kernel {:?}",
            signal.shape(),
            kernel.shape()
        )));
    }
    check_fits(signal.shape(), kernel.shape())?;
    let (c, h, w) = (signal.shape()[0], signal.shape()[1], signal.shape()[2]);
    let (kh, kw) = (kernel.shape()[1], kernel.shape()[2]);
    let (out, oh, ow) = correlate_planes(signal.data(), (c, h, w), kernel.data(), (kh, kw), stride);
    Tensor::from_vec(&[oh, ow], out)
}

/// Valid-mode 1D cross-correlation.
pub fn correlate1d(signal: &Tensor, kernel: &Tensor, stride: usize) -> Result<Tensor> {
    expect_rank(signal, 1, "signal")?;
    expect_rank(kernel, 1, "kernel")?;
    check_stride(stride)?;
    check_fits(signal.shape(), kernel.shape())?;
    let (n, k) = (signal.len(), kernel.len());
    let (out, _, len) = correlate_planes(signal.data(), (1, 1, n), kernel.data(), (1, k), stride);
    Tensor::from_vec(&[len], out)
}

/// Impulse response of the matched filter for `pattern` (unit gain, zero delay).
pub fn matched_filter_from(pattern: &Tensor) -> Tensor {
    pattern.reverse_all_axes()
}

/// An ordered set of same-shaped kernels, one label each.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    kernels: Vec<Tensor>,
    labels: Vec<String>,
}

impl FilterBank {
    pub fn new(kernels: Vec<Tensor>, labels: Vec<String>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::Argument("filter bank needs at least one kernel".into()));
        }
        if kernels.len() != labels.len() {
            return Err(Error::Argument(format!(
                "{} kernels but {} labels",
                kernels.len(),
                labels.len()
            )));
        }
        let shape = kernels[0].shape();
        if let Some(k) = kernels.iter().find(|k| k.shape() != shape) {
            return Err(Error::Shape(format!(
                "bank kernels differ in shape: {:?} vs {:?}",
                shape,
                k.shape()
            )));
        }
        for (i, label) in labels.iter().enumerate() {
            if labels[..i].contains(label) {
                return Err(Error::Argument(format!("duplicate label {label:?}")));
            }
        }
        Ok(Self { kernels, labels })
    }

    pub fn kernels(&self) -> &[Tensor] {
        &self.kernels
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernel_shape(&self) -> &[usize] {
        self.kernels[0].shape()
    }

    /// Stride-1 response map of every kernel. Rank-2 kernels correlate with a
    /// rank-2 signal, rank-3 kernels channel-sum over a rank-3 signal.
    pub fn responses(&self, signal: &Tensor) -> Result<Vec<Tensor>> {
        self.kernels
            .par_iter()
            .map(|k| match k.rank() {
                2 => correlate2d(signal, k, 1),
                3 => correlate_channels(signal, k, 1),
                r => Err(Error::Shape(format!("bank kernels must be rank 2 or 3, got {r}"))),
            })
            .collect()
    }
}

/// Best match of a filter bank against a signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub class_index: usize,
    pub location: (usize, usize),
    pub score: f64,
}

/// Maximises the response over every kernel and offset. Ties resolve to the
/// lowest `(k, m, n)` in lexicographic order.
pub fn detect_multi(signal: &Tensor, bank: &FilterBank) -> Result<Detection> {
    if bank.is_empty() {
        return Err(Error::Argument("empty filter bank".into()));
    }
    let maps = bank.responses(signal)?;
    let mut best: Option<Detection> = None;
    for (k, map) in maps.iter().enumerate() {
        let (at, score) = argmax_slice(map.data());
        if best.as_ref().is_none_or(|b| score > b.score) {
            let width = map.shape()[1];
            best = Some(Detection {
                class_index: k,
                location: (at / width, at % width),
                score,
            });
        }
    }
    Ok(best.expect("bank is nonempty"))
}

/// Class decision of a bank used as a network: per-kernel maximum response,
/// clamped at zero, then the lowest index attaining the largest score.
pub fn classify_by_bank(signal: &Tensor, bank: &FilterBank) -> Result<usize> {
    let scores: Vec<f64> = bank
        .responses(signal)?
        .iter()
        .map(|m| m.max().max(0.0))
        .collect();
    Ok(argmax_slice(&scores).0)
}

/// Positive decision iff the detection score strictly exceeds `threshold`.
pub fn threshold_decision(detection: &Detection, threshold: f64) -> bool {
    detection.score > threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t2(rows: &[&[f64]]) -> Tensor {
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::from_vec(&[rows.len(), rows[0].len()], data).unwrap()
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0)).unwrap()
    }

    // Direct summation straight from the definition.
    fn oracle2d(s: &Tensor, f: &Tensor, c: usize) -> Tensor {
        let (h, w) = (s.shape()[0], s.shape()[1]);
        let (kh, kw) = (f.shape()[0], f.shape()[1]);
        Tensor::from_fn(&[(h - kh) / c + 1, (w - kw) / c + 1], |o| {
            let mut acc = 0.0;
            for a in 0..kh {
                for b in 0..kw {
                    acc += s.get(&[a + c * o[0], b + c * o[1]]) * f.get(&[a, b]);
                }
            }
            acc
        })
        .unwrap()
    }

    #[test]
    fn identity_kernel_passes_signal_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random(&[4, 5], &mut rng);
        let one = Tensor::full(&[1, 1], 1.0).unwrap();
        assert_eq!(correlate2d(&s, &one, 1).unwrap(), s);
    }

    #[test]
    fn l_shape_peaks_at_embed_offset() {
        let l = l_shape_mask();
        let mut scene = Tensor::zeros(&[5, 5]).unwrap();
        scene.embed(&l, &[1, 1]).unwrap();
        let g = correlate2d(&scene, &l, 1).unwrap();
        assert_eq!(g.argmax_flat(), (vec![1, 1], 5.0));
        let conv = convolve2d(&scene, &l, 1).unwrap();
        assert_ne!(conv.argmax_flat().0, vec![1, 1]);
    }

    #[test]
    fn strided_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random(&[6, 7], &mut rng);
        let f = random(&[3, 3], &mut rng);
        let got = correlate2d(&s, &f, 2).unwrap();
        let want = oracle2d(&s, &f, 2);
        assert_eq!(got.shape(), &[2, 3]);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flip_identity_and_symmetric_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random(&[8, 9], &mut rng);
        let f = random(&[3, 4], &mut rng);
        assert_eq!(
            convolve2d(&s, &f.reverse_all_axes(), 1).unwrap(),
            correlate2d(&s, &f, 1).unwrap()
        );
        let sym = t2(&[&[1.0, 2.0, 1.0], &[2.0, 4.0, 2.0], &[1.0, 2.0, 1.0]]);
        assert_eq!(
            convolve2d(&s, &sym, 1).unwrap(),
            correlate2d(&s, &sym, 1).unwrap()
        );
    }

    #[test]
    fn correlate1d_examples() {
        let s = Tensor::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let one = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        assert_eq!(correlate1d(&s, &one, 1).unwrap(), s);

        let pattern = Tensor::from_vec(&[3], vec![1.0, 2.0, 1.0]).unwrap();
        let mut s = Tensor::zeros(&[8]).unwrap();
        s.embed(&pattern, &[3]).unwrap();
        let g = correlate1d(&s, &pattern, 1).unwrap();
        assert_eq!(g.argmax_flat(), (vec![3], 6.0));
    }

    #[test]
    fn shape_and_stride_errors() {
        let s = Tensor::zeros(&[3, 3]).unwrap();
        let k = Tensor::zeros(&[4, 2]).unwrap();
        assert!(matches!(correlate2d(&s, &k, 1), Err(Error::Shape(_))));
        assert!(matches!(convolve2d(&s, &k, 1), Err(Error::Shape(_))));
        let k = Tensor::zeros(&[2, 2]).unwrap();
        assert!(matches!(correlate2d(&s, &k, 0), Err(Error::Argument(_))));
        let s1 = Tensor::zeros(&[3]).unwrap();
        let k1 = Tensor::zeros(&[4]).unwrap();
        assert!(matches!(correlate1d(&s1, &k1, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn matched_filter_is_reversal() {
        let f = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matched_filter_from(&f), t2(&[&[4.0, 3.0], &[2.0, 1.0]]));
        let v = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(matched_filter_from(&v).data(), &[3.0, 2.0, 1.0]);
        let ones = Tensor::full(&[3, 3], 1.0).unwrap();
        assert_eq!(matched_filter_from(&ones), ones);
    }

    #[test]
    fn bank_validation() {
        let a = Tensor::zeros(&[2, 2]).unwrap();
        let b = Tensor::zeros(&[3, 2]).unwrap();
        assert!(FilterBank::new(vec![], vec![]).is_err());
        assert!(FilterBank::new(vec![a.clone(), b], vec!["a".into(), "b".into()]).is_err());
        assert!(FilterBank::new(vec![a.clone(), a.clone()], vec!["a".into(), "a".into()]).is_err());
        assert!(FilterBank::new(vec![a], vec!["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn single_kernel_bank_reduces_to_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random(&[10, 10], &mut rng);
        let f = random(&[3, 3], &mut rng);
        let bank = FilterBank::new(vec![f.clone()], vec!["f".into()]).unwrap();
        let d = detect_multi(&s, &bank).unwrap();
        let (idx, v) = correlate2d(&s, &f, 1).unwrap().argmax_flat();
        assert_eq!(d.class_index, 0);
        assert_eq!(d.location, (idx[0], idx[1]));
        assert_eq!(d.score, v);
    }

    #[test]
    fn detect_multi_ties_prefer_lowest_kernel() {
        let s = Tensor::full(&[4, 4], 1.0).unwrap();
        let k = Tensor::full(&[2, 2], 1.0).unwrap();
        let bank = FilterBank::new(vec![k.clone(), k], vec!["a".into(), "b".into()]).unwrap();
        let d = detect_multi(&s, &bank).unwrap();
        assert_eq!((d.class_index, d.location, d.score), (0, (0, 0), 4.0));
    }

    #[test]
    fn threshold_is_strict() {
        let det = |score| Detection {
            class_index: 0,
            location: (0, 0),
            score,
        };
        assert!(threshold_decision(&det(5.0), 4.0));
        assert!(!threshold_decision(&det(4.0), 4.0));
        assert!(!threshold_decision(&det(-1.0), 0.0));
    }

    #[test]
    fn classify_by_bank_clamps_negative_scores() {
        let s = Tensor::full(&[1, 2, 2], 1.0).unwrap();
        let neg = Tensor::full(&[1, 2, 2], -1.0).unwrap();
        let less_neg = Tensor::full(&[1, 2, 2], -0.5).unwrap();
        let bank = FilterBank::new(vec![neg, less_neg], vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(classify_by_bank(&s, &bank).unwrap(), 0);
        assert_eq!(detect_multi(&s, &bank).unwrap().class_index, 1);
    }
}
