use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::layers::{
    conv_backward, conv_forward, global_max_pool, global_max_pool_backward, predict_one_hot,
    relu_backward, relu_forward, softmax_cross_entropy, ConvGrad, ConvLayer,
};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    Relu,
    GlobalMaxPool,
    /// Softmax cross-entropy during training, plain argmax at inference.
    SoftmaxClassifier,
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Relu => "relu",
            Layer::GlobalMaxPool => "global_max_pool",
            Layer::SoftmaxClassifier => "softmax_classifier",
        }
    }
}

/// Convolution/ReLU stack closed by a global max pool and a classifier head.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_shape: [usize; 3],
    layers: Vec<Layer>,
    class_labels: Vec<String>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Trace {
    /// `activations[i]` is the input of layer `i`; the last entry is the pooled score vector.
    pub activations: Vec<Tensor>,
    /// In-plane argmax of every pooled channel.
    pub pool_positions: Vec<usize>,
}

impl Trace {
    pub fn scores(&self) -> &Tensor {
        self.activations.last().expect("trace always holds the input")
    }
}

impl Network {
    /// Checks that shapes chain from `input_shape` (`C x H x W`) through every
    /// convolution, and that the stack ends in exactly one pool and one
    /// classifier whose width equals the number of class labels.
    pub fn new(input_shape: [usize; 3], layers: Vec<Layer>, class_labels: Vec<String>) -> Result<Self> {
        let n = layers.len();
        if n < 3
            || layers[n - 2] != Layer::GlobalMaxPool
            || layers[n - 1] != Layer::SoftmaxClassifier
        {
            return Err(Error::Shape(
                "network must end with a global max pool followed by the classifier head".into(),
            ));
        }
        if layers[..n - 2]
            .iter()
            .any(|l| matches!(l, Layer::GlobalMaxPool | Layer::SoftmaxClassifier))
        {
            return Err(Error::Shape(
                "pooling and classifier may only appear once, at the end".into(),
            ));
        }
        if !layers.iter().any(|l| matches!(l, Layer::Conv(_))) {
            return Err(Error::Shape("network needs at least one conv layer".into()));
        }
        let mut shape = input_shape;
        for (i, layer) in layers[..n - 2].iter().enumerate() {
            if let Layer::Conv(conv) = layer {
                shape = conv
                    .output_shape(&shape)
                    .map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
            }
        }
        if shape[0] != class_labels.len() {
            return Err(Error::Shape(format!(
                "last conv produces {} maps but there are {} classes",
                shape[0],
                class_labels.len()
            )));
        }
        Ok(Self {
            input_shape,
            layers,
            class_labels,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn num_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Conv(c) => Some(c),
            _ => None,
        })
    }

    /// Every trainable tensor, in layer order: kernels then biases.
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut params = Vec::new();
        for layer in &mut self.layers {
            if let Layer::Conv(c) = layer {
                params.push(&mut c.kernels);
                if let Some(b) = &mut c.biases {
                    params.push(b);
                }
            }
        }
        params
    }

    pub fn parameter_count(&self) -> usize {
        self.conv_layers()
            .map(|c| c.kernels.len() + c.biases.as_ref().map_or(0, Tensor::len))
            .sum()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape {
            return Err(Error::Shape(format!(
                "network expects input {:?}, got {:?}",
                self.input_shape,
                input.shape()
            )));
        }
        Ok(())
    }

    pub fn forward_trace(&self, input: &Tensor) -> Result<Trace> {
        self.check_input(input)?;
        let mut activations = vec![input.clone()];
        let mut pool_positions = Vec::new();
        for layer in &self.layers {
            let x = activations.last().expect("nonempty");
            let y = match layer {
                Layer::Conv(c) => conv_forward(x, c)?,
                Layer::Relu => relu_forward(x),
                Layer::GlobalMaxPool => {
                    let (scores, positions) = global_max_pool(x)?;
                    pool_positions = positions;
                    scores
                }
                Layer::SoftmaxClassifier => break,
            };
            activations.push(y);
        }
        Ok(Trace {
            activations,
            pool_positions,
        })
    }

    /// Pooled scores `o(k)`.
    pub fn scores(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(input)?.scores().clone())
    }

    /// `argmax_k o(k)`, lowest index on ties.
    pub fn predict(&self, input: &Tensor) -> Result<usize> {
        Ok(predict_one_hot(&self.scores(input)?))
    }

    /// Backpropagates a gradient on the pooled scores through the stack.
    pub fn backward_from_scores(&self, trace: &Trace, score_grad: &Tensor) -> Result<Gradients> {
        let body = &self.layers[..self.layers.len() - 1];
        let first_conv = body
            .iter()
            .position(|l| matches!(l, Layer::Conv(_)))
            .expect("validated at construction");
        let mut grads = vec![None; self.layers.len()];
        let mut upstream = score_grad.clone();
        for i in (first_conv..body.len()).rev() {
            let input = &trace.activations[i];
            upstream = match &body[i] {
                Layer::GlobalMaxPool => {
                    global_max_pool_backward(input.shape(), &trace.pool_positions, &upstream)?
                }
                Layer::Relu => relu_backward(input, &upstream)?,
                Layer::Conv(c) => {
                    let (g, dx) = conv_backward(input, c, &upstream, i > first_conv)?;
                    grads[i] = Some(g);
                    match dx {
                        Some(dx) => dx,
                        None => break,
                    }
                }
                Layer::SoftmaxClassifier => unreachable!("head is excluded from the body"),
            };
        }
        Ok(Gradients { layers: grads })
    }
}

/// Loss and exact parameter gradients for one labelled sample.
pub fn backward(net: &Network, input: &Tensor, label: usize) -> Result<(f64, Gradients)> {
    let trace = net.forward_trace(input)?;
    let (loss, score_grad) = softmax_cross_entropy(trace.scores(), label)?;
    let grads = net.backward_from_scores(&trace, &score_grad)?;
    Ok((loss, grads))
}

/// Per-layer gradients aligned with [`Network::layers`]; `None` for
/// parameter-free layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<ConvGrad>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Result<Self> {
        let layers = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Ok(Some(ConvGrad {
                    kernels: Tensor::zeros(c.kernels.shape())?,
                    biases: c.biases.as_ref().map(|b| Tensor::zeros(b.shape())).transpose()?,
                })),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    /// Gradient tensors in the same order as [`Network::parameters_mut`].
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for g in self.layers.iter().flatten() {
            out.push(&g.kernels);
            if let Some(b) = &g.biases {
                out.push(b);
            }
        }
        out
    }

    /// `self += factor * other`.
    pub fn accumulate(&mut self, other: &Gradients, factor: f64) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Shape("gradient layer counts differ".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    a.kernels.add_scaled(&b.kernels, factor)?;
                    match (&mut a.biases, &b.biases) {
                        (Some(x), Some(y)) => x.add_scaled(y, factor)?,
                        (None, None) => {}
                        _ => return Err(Error::Shape("bias presence differs".into())),
                    }
                }
                // A conv layer whose gradient was not reached contributes zero.
                (Some(_), None) | (None, None) => {}
                (None, Some(_)) => {
                    return Err(Error::Shape("gradient for a parameter-free layer".into()))
                }
            }
        }
        Ok(())
    }
}

/// Plain SGD: `p <- p - lr * g` for every parameter.
pub fn sgd_step(net: &mut Network, grads: &Gradients, learning_rate: f64) -> Result<()> {
    if grads.layers.len() != net.layers.len() {
        return Err(Error::Shape("gradients do not match the network".into()));
    }
    for (layer, grad) in net.layers.iter_mut().zip(&grads.layers) {
        if let (Layer::Conv(c), Some(g)) = (layer, grad) {
            sgd_update(&mut c.kernels, &g.kernels, learning_rate)?;
            match (&mut c.biases, &g.biases) {
                (Some(b), Some(gb)) => sgd_update(b, gb, learning_rate)?,
                (None, None) => {}
                _ => return Err(Error::Shape("bias presence differs".into())),
            }
        }
    }
    Ok(())
}

pub fn sgd_update(param: &mut Tensor, grad: &Tensor, learning_rate: f64) -> Result<()> {
    param.add_scaled(grad, -learning_rate)
}
