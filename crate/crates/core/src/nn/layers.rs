use rand::Rng;

use crate::error::{Error, Result};
use crate::filtering::{correlate_planes, FilterBank};
use crate::tensor::{argmax_slice, Tensor};

/// A bank of `K` kernels over `C` input channels, slid with a fixed stride.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    /// `K x C x h x w`.
    pub kernels: Tensor,
    /// `K` biases, or `None` for a pure matched-filter layer.
    pub biases: Option<Tensor>,
    pub stride: usize,
}

impl ConvLayer {
    pub fn new(kernels: Tensor, biases: Option<Tensor>, stride: usize) -> Result<Self> {
        if kernels.rank() != 4 {
            return Err(Error::Shape(format!(
                "conv kernels must be K x C x h x w, got {:?}",
                kernels.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::Argument("stride must be at least 1".into()));
        }
        if let Some(b) = &biases {
            if b.shape() != [kernels.shape()[0]] {
                return Err(Error::Shape(format!(
                    "bias shape {:?} does not match {} kernels",
                    b.shape(),
                    kernels.shape()[0]
                )));
            }
        }
        Ok(Self {
            kernels,
            biases,
            stride,
        })
    }

    /// Uniform initialisation on `[-r, r]` with `r = 1/sqrt(C*h*w)`; biases start at zero.
    pub fn random(
        shape: [usize; 4],
        stride: usize,
        with_bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
        let r = 1.0 / fan_in.sqrt();
        let kernels = Tensor::from_fn(&shape, |_| rng.gen_range(-r..=r))?;
        let biases = with_bias.then(|| Tensor::zeros(&[shape[0]])).transpose()?;
        Self::new(kernels, biases, stride)
    }

    /// Loads a filter bank as kernels. Rank-2 bank kernels become single-channel.
    pub fn from_bank(bank: &FilterBank, stride: usize, with_bias: bool) -> Result<Self> {
        let ks = bank.kernel_shape();
        let per_kernel: Vec<usize> = match *ks {
            [h, w] => vec![1, h, w],
            [c, h, w] => vec![c, h, w],
            _ => return Err(Error::Shape(format!("bank kernels of shape {ks:?}"))),
        };
        let mut shape = vec![bank.len()];
        shape.extend(&per_kernel);
        let data: Vec<f64> = bank
            .kernels()
            .iter()
            .flat_map(|k| k.data().iter().copied())
            .collect();
        let biases = with_bias.then(|| Tensor::zeros(&[bank.len()])).transpose()?;
        Self::new(Tensor::from_vec(&shape, data)?, biases, stride)
    }

    /// Kernels as a labelled bank of `C x h x w` tensors.
    pub fn to_bank(&self, labels: Vec<String>) -> Result<FilterBank> {
        let kernels = (0..self.num_kernels())
            .map(|k| self.kernels.slice_outer(k))
            .collect::<Result<Vec<_>>>()?;
        FilterBank::new(kernels, labels)
    }

    pub fn num_kernels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernels.shape()[2], self.kernels.shape()[3])
    }

    /// Output extent `[K, H', W']` for a `[C, H, W]` input.
    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 3]> {
        let (kh, kw) = self.kernel_size();
        match *input {
            [c, h, w] if c == self.in_channels() && kh <= h && kw <= w => Ok([
                self.num_kernels(),
                (h - kh) / self.stride + 1,
                (w - kw) / self.stride + 1,
            ]),
            _ => Err(Error::Shape(format!(
                "conv layer with kernels {:?} cannot take input {input:?}",
                self.kernels.shape()
            ))),
        }
    }
}

/// `g_k(m, n) = sum_{ch,a,b} x(ch, a + c*m, b + c*n) * f_k(ch, a, b) + bias_k`.
pub fn conv_forward(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    let [k_count, out_h, out_w] = layer.output_shape(input.shape())?;
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let kernel_len = layer.kernels.len() / k_count;
    let mut out = Vec::with_capacity(k_count * out_h * out_w);
    for k in 0..k_count {
        let taps = &layer.kernels.data()[k * kernel_len..(k + 1) * kernel_len];
        let (map, _, _) = correlate_planes(input.data(), (c, h, w), taps, layer.kernel_size(), layer.stride);
        match &layer.biases {
            Some(b) => {
                let bias = b.data()[k];
                out.extend(map.into_iter().map(|v| v + bias));
            }
            None => out.extend(map),
        }
    }
    Tensor::from_vec(&[k_count, out_h, out_w], out)
}

/// Gradients of one convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrad {
    pub kernels: Tensor,
    pub biases: Option<Tensor>,
}

/// Backpropagates `upstream` (`K x H' x W'`) through a convolution.
///
/// The kernel gradient is the strided correlation of the input with the
/// upstream gradient; the input gradient scatters each upstream value back
/// through its kernel. Returns the input gradient only when `want_input`.
pub fn conv_backward(
    input: &Tensor,
    layer: &ConvLayer,
    upstream: &Tensor,
    want_input: bool,
) -> Result<(ConvGrad, Option<Tensor>)> {
    let out_shape = layer.output_shape(input.shape())?;
    if upstream.shape() != out_shape {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match conv output {out_shape:?}",
            upstream.shape()
        )));
    }
    let [k_count, out_h, out_w] = out_shape;
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (kh, kw) = layer.kernel_size();
    let stride = layer.stride;
    let x = input.data();
    let f = layer.kernels.data();
    let dy = upstream.data();

    let mut dk = vec![0.0; layer.kernels.len()];
    let mut dx = want_input.then(|| vec![0.0; input.len()]);
    for k in 0..k_count {
        for m in 0..out_h {
            for n in 0..out_w {
                let g = dy[(k * out_h + m) * out_w + n];
                if g == 0.0 {
                    continue;
                }
                for ch in 0..c {
                    for a in 0..kh {
                        let x_row = (ch * h + stride * m + a) * w + stride * n;
                        let k_row = ((k * c + ch) * kh + a) * kw;
                        for b in 0..kw {
                            dk[k_row + b] += g * x[x_row + b];
                        }
                        if let Some(dx) = dx.as_mut() {
                            for b in 0..kw {
                                dx[x_row + b] += g * f[k_row + b];
                            }
                        }
                    }
                }
            }
        }
    }
    let biases = match layer.biases {
        Some(_) => {
            let plane = out_h * out_w;
            let db: Vec<f64> = (0..k_count)
                .map(|k| dy[k * plane..(k + 1) * plane].iter().sum())
                .collect();
            Some(Tensor::from_vec(&[k_count], db)?)
        }
        None => None,
    };
    let grad = ConvGrad {
        kernels: Tensor::from_vec(layer.kernels.shape(), dk)?,
        biases,
    };
    let dx = dx.map(|d| Tensor::from_vec(input.shape(), d)).transpose()?;
    Ok((grad, dx))
}

/// `max(0, x)` elementwise.
pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Passes the upstream gradient where the pre-activation was strictly positive.
pub fn relu_backward(pre_activation: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    pre_activation.zip_with(upstream, |x, g| if x > 0.0 { g } else { 0.0 })
}

/// Per-channel spatial maximum of `K x H x W` maps.
///
/// Also returns, for each channel, the flat in-plane index of the first
/// maximum; backpropagation routes the whole gradient to that cell.
pub fn global_max_pool(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    if x.rank() != 3 {
        return Err(Error::Shape(format!(
            "global max pool expects K x H x W, got {:?}",
            x.shape()
        )));
    }
    let k_count = x.shape()[0];
    let plane = x.shape()[1] * x.shape()[2];
    let (positions, values): (Vec<usize>, Vec<f64>) = x
        .data()
        .chunks(plane)
        .map(argmax_slice)
        .unzip();
    Ok((Tensor::from_vec(&[k_count], values)?, positions))
}

pub fn global_max_pool_backward(
    input_shape: &[usize],
    positions: &[usize],
    upstream: &Tensor,
) -> Result<Tensor> {
    let mut grad = Tensor::zeros(input_shape)?;
    let plane = input_shape[1] * input_shape[2];
    for (k, (&at, &g)) in positions.iter().zip(upstream.data()).enumerate() {
        grad.data_mut()[k * plane + at] = g;
    }
    Ok(grad)
}

/// One-hot decision: the lowest index attaining the maximum pooled score.
pub fn predict_one_hot(scores: &Tensor) -> usize {
    argmax_slice(scores.data()).0
}

/// Cross-entropy of `softmax(scores)` against `label`, with its gradient
/// `softmax(scores) - onehot(label)`.
pub fn softmax_cross_entropy(scores: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let k = scores.len();
    if label >= k {
        return Err(Error::Argument(format!(
            "label {label} out of range for {k} classes"
        )));
    }
    let max = scores.max();
    let shifted: Vec<f64> = scores.data().iter().map(|&v| v - max).collect();
    let log_sum = shifted.iter().map(|v| v.exp()).sum::<f64>().ln();
    let loss = log_sum - shifted[label];
    let mut grad: Vec<f64> = shifted.iter().map(|&v| (v - log_sum).exp()).collect();
    grad[label] -= 1.0;
    Ok((loss, Tensor::from_vec(scores.shape(), grad)?))
}
