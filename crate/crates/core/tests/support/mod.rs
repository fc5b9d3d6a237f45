//! Shared fixtures for the integration and acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use mfcnn_core::netpbm::{self, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `<workspace>/data/mnist`.
pub fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

pub fn mnist_available() -> bool {
    ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
        .iter()
        .all(|f| mnist_dir().join(f).is_file())
}

/// `<workspace>/data/sign_language`, the real dataset when present.
pub fn sign_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sign_language")
}

pub const SIGN_CLASSES: [&str; 10] = ["C", "E", "I", "K", "L", "O", "P", "Q", "X", "Y"];

enum Stroke {
    /// Segment from `(x0, y0)` to `(x1, y1)` with half-width `r`.
    Line(f64, f64, f64, f64, f64),
    /// Arc of radius `rad` around `(cx, cy)` from angle `a0` to `a1`, half-width `r`.
    Arc(f64, f64, f64, f64, f64, f64),
}

/// Hand-like glyphs in unit coordinates, y pointing down: a shared palm
/// plus class-specific fingers.
fn glyph(class: &str) -> Vec<Stroke> {
    use Stroke::{Arc, Line};
    let f = 0.045;
    let mut s = match class {
        "C" => vec![Arc(0.5, 0.42, 0.2, 0.6 * PI, 1.6 * PI, f)],
        "E" => vec![
            Line(0.38, 0.45, 0.38, 0.5, f),
            Line(0.46, 0.43, 0.46, 0.5, f),
            Line(0.54, 0.43, 0.54, 0.5, f),
            Line(0.62, 0.45, 0.62, 0.5, f),
        ],
        "I" => vec![Line(0.64, 0.55, 0.66, 0.18, f)],
        "K" => vec![Line(0.45, 0.55, 0.36, 0.15, f), Line(0.55, 0.55, 0.64, 0.15, f), Line(0.42, 0.6, 0.5, 0.35, f)],
        "L" => vec![Line(0.45, 0.55, 0.45, 0.12, f), Line(0.4, 0.62, 0.12, 0.58, f)],
        "O" => vec![Arc(0.5, 0.34, 0.15, 0.0, 2.0 * PI, f)],
        "P" => vec![Line(0.45, 0.62, 0.2, 0.9, f), Line(0.52, 0.65, 0.42, 0.95, f)],
        "Q" => vec![Line(0.45, 0.7, 0.42, 0.97, f), Line(0.4, 0.68, 0.28, 0.95, f)],
        "X" => vec![Line(0.45, 0.55, 0.45, 0.3, f), Line(0.45, 0.3, 0.55, 0.22, f)],
        "Y" => vec![Line(0.38, 0.62, 0.12, 0.4, f), Line(0.62, 0.6, 0.88, 0.38, f)],
        other => panic!("no glyph for {other}"),
    };
    s.push(Line(0.42, 0.66, 0.58, 0.66, 0.13));
    s
}

fn distance(s: &Stroke, x: f64, y: f64) -> f64 {
    match *s {
        Stroke::Line(x0, y0, x1, y1, r) => {
            let (dx, dy) = (x1 - x0, y1 - y0);
            let t = (((x - x0) * dx + (y - y0) * dy) / (dx * dx + dy * dy).max(1e-12)).clamp(0.0, 1.0);
            ((x - x0 - t * dx).powi(2) + (y - y0 - t * dy).powi(2)).sqrt() - r
        }
        Stroke::Arc(cx, cy, rad, a0, a1, r) => {
            let (px, py) = (x - cx, y - cy);
            let mut a = py.atan2(px);
            while a < a0 {
                a += 2.0 * PI;
            }
            if a <= a1 {
                ((px * px + py * py).sqrt() - rad).abs() - r
            } else {
                let end = |t: f64| ((x - cx - rad * t.cos()).powi(2) + (y - cy - rad * t.sin()).powi(2)).sqrt();
                end(a0).min(end(a1)) - r
            }
        }
    }
}

/// Renders one jittered colour image of `class`.
pub fn render_sign(class: &str, size: usize, rng: &mut impl Rng) -> Raster {
    let strokes = glyph(class);
    let angle: f64 = rng.gen_range(-0.2..0.2);
    let scale: f64 = rng.gen_range(0.85..1.15);
    let (tx, ty): (f64, f64) = (rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08));
    let bg: [f64; 3] = [rng.gen_range(0.0..0.25), rng.gen_range(0.0..0.25), rng.gen_range(0.0..0.25)];
    let tilt: [f64; 3] = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
    let skin: [f64; 3] = [rng.gen_range(0.6..1.0), rng.gen_range(0.4..0.75), rng.gen_range(0.25..0.6)];
    let (sin, cos) = angle.sin_cos();
    let mut pixels = Vec::with_capacity(size * size * 3);
    for py in 0..size {
        for px in 0..size {
            let (u, v) = ((px as f64 + 0.5) / size as f64, (py as f64 + 0.5) / size as f64);
            // Inverse transform into glyph coordinates around the centre.
            let (du, dv) = (u - 0.5 - tx, v - 0.5 - ty);
            let x = 0.5 + (cos * du + sin * dv) / scale;
            let y = 0.5 + (-sin * du + cos * dv) / scale;
            let inside = strokes.iter().any(|s| distance(s, x, y) <= 0.0);
            for ch in 0..3 {
                let base = if inside { skin[ch] } else { bg[ch] + tilt[ch] * (u - 0.5) };
                let noisy = base + 0.08 * (rng.gen::<f64>() - 0.5);
                pixels.push((noisy.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    Raster {
        width: size,
        height: size,
        channels: 3,
        pixels,
    }
}

/// Writes `root/<class>/<n>.ppm`, `per_class` images per class.
pub fn write_sign_standin(root: &Path, per_class: usize, size: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for class in SIGN_CLASSES {
        let dir = root.join(class);
        fs::create_dir_all(&dir).unwrap();
        for n in 0..per_class {
            let raster = render_sign(class, size, &mut rng);
            netpbm::write(&dir.join(format!("{n:03}.ppm")), &raster).unwrap();
        }
    }
}

use mfcnn_core::nn::{backward, ConvLayer, Layer, Network, Trace};
use mfcnn_core::Tensor;

/// A random network of one or two conv layers over an input of at most 8x8.
pub fn random_network(rng: &mut impl Rng) -> (Network, Tensor, usize) {
    loop {
        let (c, h, w) = (rng.gen_range(1..=3), rng.gen_range(3..=8), rng.gen_range(3..=8));
        let depth = rng.gen_range(1..=2);
        let classes = rng.gen_range(2..=4);
        let mut shape = [c, h, w];
        let mut layers = Vec::new();
        let mut ok = true;
        for d in 0..depth {
            let k = if d + 1 == depth { classes } else { rng.gen_range(1..=3) };
            let kh = rng.gen_range(1..=shape[1].min(4));
            let kw = rng.gen_range(1..=shape[2].min(4));
            let stride = rng.gen_range(1..=2);
            let layer = ConvLayer::random([k, shape[0], kh, kw], stride, rng.gen(), rng).unwrap();
            shape = [k, (shape[1] - kh) / stride + 1, (shape[2] - kw) / stride + 1];
            ok &= shape[1] >= 1 && shape[2] >= 1;
            layers.push(Layer::Conv(layer));
            layers.push(Layer::Relu);
        }
        if !ok {
            continue;
        }
        layers.push(Layer::GlobalMaxPool);
        layers.push(Layer::SoftmaxClassifier);
        let labels = (0..classes).map(|i| i.to_string()).collect();
        let net = Network::new([c, h, w], layers, labels).unwrap();
        let input = Tensor::from_fn(&[c, h, w], |_| rng.gen_range(-1.0..1.0)).unwrap();
        return (net, input, rng.gen_range(0..classes));
    }
}

/// ReLU gates and pool winners of a forward pass; the loss is smooth in the
/// parameters only while this stays fixed.
pub fn activation_pattern(net: &Network, trace: &Trace) -> (Vec<bool>, Vec<usize>) {
    let mut gates = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        if *layer == Layer::Relu {
            gates.extend(trace.activations[i].data().iter().map(|&v| v > 0.0));
        }
    }
    (gates, trace.pool_positions.clone())
}

fn loss(net: &Network, input: &Tensor, label: usize) -> (f64, (Vec<bool>, Vec<usize>)) {
    let trace = net.forward_trace(input).unwrap();
    let (l, _) = mfcnn_core::nn::softmax_cross_entropy(trace.scores(), label).unwrap();
    (l, activation_pattern(net, &trace))
}

#[derive(Debug)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub parameters: usize,
    /// Some perturbation crossed a ReLU kink or switched a pool winner.
    pub crossed_kink: bool,
}

/// Compares every parameter's backpropagated gradient against a central
/// difference with step `h`, computed by re-running the forward pass.
pub fn grad_check(net: &Network, input: &Tensor, label: usize, h: f64, floor: f64) -> GradCheck {
    let (_, grads) = backward(net, input, label).unwrap();
    let analytic: Vec<f64> = grads.tensors().iter().flat_map(|t| t.data().to_vec()).collect();
    let (_, base_pattern) = loss(net, input, label);
    let mut max_rel_error: f64 = 0.0;
    let mut crossed_kink = false;
    let mut flat = 0;
    let tensors = net.clone().parameters_mut().len();
    for p in 0..tensors {
        let len = net.clone().parameters_mut()[p].len();
        for j in 0..len {
            let shifted = |delta: f64| {
                let mut n = net.clone();
                n.parameters_mut()[p].data_mut()[j] += delta;
                loss(&n, input, label)
            };
            let (up, up_pattern) = shifted(h);
            let (down, down_pattern) = shifted(-h);
            crossed_kink |= up_pattern != base_pattern || down_pattern != base_pattern;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[flat];
            let rel = if a == numeric {
                0.0
            } else {
                (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor)
            };
            max_rel_error = max_rel_error.max(rel);
            flat += 1;
        }
    }
    GradCheck {
        max_rel_error,
        parameters: flat,
        crossed_kink,
    }
}

/// Valid-mode 2D cross-correlation by explicit loops over output and kernel.
pub fn oracle_correlate2d(s: &Tensor, f: &Tensor, stride: usize) -> Tensor {
    let (sh, sw) = (s.shape()[0], s.shape()[1]);
    let (fh, fw) = (f.shape()[0], f.shape()[1]);
    let (oh, ow) = ((sh - fh) / stride + 1, (sw - fw) / stride + 1);
    let mut out = vec![0.0; oh * ow];
    for m in 0..oh {
        for n in 0..ow {
            for a in 0..fh {
                for b in 0..fw {
                    out[m * ow + n] += s.data()[(stride * m + a) * sw + stride * n + b] * f.data()[a * fw + b];
                }
            }
        }
    }
    Tensor::from_vec(&[oh, ow], out).unwrap()
}

/// Valid-mode 2D convolution: the kernel index runs backwards.
pub fn oracle_convolve2d(s: &Tensor, f: &Tensor, stride: usize) -> Tensor {
    let (sh, sw) = (s.shape()[0], s.shape()[1]);
    let (fh, fw) = (f.shape()[0], f.shape()[1]);
    let (oh, ow) = ((sh - fh) / stride + 1, (sw - fw) / stride + 1);
    let mut out = vec![0.0; oh * ow];
    for m in 0..oh {
        for n in 0..ow {
            for a in 0..fh {
                for b in 0..fw {
                    let k = f.data()[(fh - 1 - a) * fw + (fw - 1 - b)];
                    out[m * ow + n] += s.data()[(stride * m + a) * sw + stride * n + b] * k;
                }
            }
        }
    }
    Tensor::from_vec(&[oh, ow], out).unwrap()
}

pub fn oracle_correlate1d(s: &Tensor, f: &Tensor, stride: usize) -> Tensor {
    let (n, k) = (s.len(), f.len());
    let out: Vec<f64> = (0..(n - k) / stride + 1)
        .map(|m| (0..k).map(|a| s.data()[stride * m + a] * f.data()[a]).sum())
        .collect();
    Tensor::from_vec(&[out.len()], out).unwrap()
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A random signal/kernel pair: signal sides up to 16, kernel no larger.
pub fn random_pair_2d(rng: &mut impl Rng) -> (Tensor, Tensor, usize) {
    let (sh, sw) = (rng.gen_range(1..=16), rng.gen_range(1..=16));
    let (fh, fw) = (rng.gen_range(1..=sh), rng.gen_range(1..=sw));
    let s = Tensor::from_fn(&[sh, sw], |_| rng.gen_range(-1.0..1.0)).unwrap();
    let f = Tensor::from_fn(&[fh, fw], |_| rng.gen_range(-1.0..1.0)).unwrap();
    (s, f, rng.gen_range(1..=3))
}

pub fn random_pair_1d(rng: &mut impl Rng) -> (Tensor, Tensor, usize) {
    let n = rng.gen_range(1..=16);
    let k = rng.gen_range(1..=n);
    let s = Tensor::from_fn(&[n], |_| rng.gen_range(-1.0..1.0)).unwrap();
    let f = Tensor::from_fn(&[k], |_| rng.gen_range(-1.0..1.0)).unwrap();
    (s, f, rng.gen_range(1..=3))
}
