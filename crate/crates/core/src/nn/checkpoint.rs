//! Versioned binary network checkpoints.
//!
//! Layout, all integers `u32` little-endian, all parameters `f64` little-endian:
//!
//! ```text
//! "MFCN" | version | layer count
//! per layer: tag (0 conv, 1 relu, 2 global max pool, 3 softmax classifier)
//!   conv only: K | C | h | w | stride | has_bias | K*C*h*w kernels | K biases if has_bias
//! trailer: input C | H | W | class count | per class: byte length | UTF-8 name
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::layers::ConvLayer;
use super::network::{Layer, Network};

pub const MAGIC: &[u8; 4] = b"MFCN";
pub const VERSION: u32 = 1;

const TAG_CONV: u32 = 0;
const TAG_RELU: u32 = 1;
const TAG_POOL: u32 = 2;
const TAG_SOFTMAX: u32 = 3;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(net: &Network) -> Result<Vec<u8>> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, net.layers().len())?;
    for layer in net.layers() {
        match layer {
            Layer::Conv(c) => {
                put_u32(&mut out, TAG_CONV as usize)?;
                for &d in c.kernels.shape() {
                    put_u32(&mut out, d)?;
                }
                put_u32(&mut out, c.stride)?;
                put_u32(&mut out, usize::from(c.biases.is_some()))?;
                put_f64s(&mut out, c.kernels.data());
                if let Some(b) = &c.biases {
                    put_f64s(&mut out, b.data());
                }
            }
            Layer::Relu => put_u32(&mut out, TAG_RELU as usize)?,
            Layer::GlobalMaxPool => put_u32(&mut out, TAG_POOL as usize)?,
            Layer::SoftmaxClassifier => put_u32(&mut out, TAG_SOFTMAX as usize)?,
        }
    }
    for d in net.input_shape() {
        put_u32(&mut out, d)?;
    }
    put_u32(&mut out, net.num_classes())?;
    for name in net.class_labels() {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint(format!(
                "truncated: need {n} bytes at offset {}",
                self.pos
            )));
        };
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Checkpoint("parameter count overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not an MFCN checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let layer = match r.u32()? as u32 {
            TAG_CONV => {
                let shape = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
                let stride = r.u32()?;
                let has_bias = r.u32()? != 0;
                let kernels = Tensor::from_vec(&shape, r.f64s(shape.iter().product())?)
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
                let biases = if has_bias {
                    Some(Tensor::from_vec(&[shape[0]], r.f64s(shape[0])?)?)
                } else {
                    None
                };
                Layer::Conv(ConvLayer::new(kernels, biases, stride)?)
            }
            TAG_RELU => Layer::Relu,
            TAG_POOL => Layer::GlobalMaxPool,
            TAG_SOFTMAX => Layer::SoftmaxClassifier,
            other => return Err(Error::Checkpoint(format!("unknown layer tag {other}"))),
        };
        layers.push(layer);
    }
    let input = [r.u32()?, r.u32()?, r.u32()?];
    let classes = r.u32()?;
    let mut labels = Vec::with_capacity(classes.min(1024));
    for _ in 0..classes {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("class name is not UTF-8".into()))?;
        labels.push(name.to_owned());
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Network::new(input, layers, labels)
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, encode(net)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Network> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
