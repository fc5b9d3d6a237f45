//! Binary PGM (P5) and PPM (P6) reading and writing, 8-bit only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A decoded netpbm raster: `channels` is 1 for P5 and 3 for P6.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Interleaved, row-major, scaled to 0..=255.
    pub pixels: Vec<u8>,
}

pub fn encode(raster: &Raster) -> Result<Vec<u8>> {
    let magic = match raster.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::Argument(format!("netpbm supports 1 or 3 channels, got {c}"))),
    };
    if raster.pixels.len() != raster.width * raster.height * raster.channels {
        return Err(Error::Shape(format!(
            "{}x{}x{} raster has {} bytes",
            raster.width,
            raster.height,
            raster.channels,
            raster.pixels.len()
        )));
    }
    let mut out = format!("{magic}\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    out.extend_from_slice(&raster.pixels);
    Ok(out)
}

pub fn write(path: &Path, raster: &Raster) -> Result<()> {
    fs::write(path, encode(raster)?).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|reason| Error::Decode {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Raster, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;

    let channels = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(format!("unsupported netpbm magic {other:?}")),
    };
    let parse = |s: &str, what: &str| -> std::result::Result<usize, String> {
        s.parse::<usize>()
            .map_err(|_| format!("bad {what} field {s:?}"))
    };
    let width = parse(&fields[1], "width")?;
    let height = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if width == 0 || height == 0 {
        return Err("zero-sized image".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("maxval {maxval} not supported (8-bit only)"));
    }
    let len = width * height * channels;
    let body = bytes
        .get(pos..pos + len)
        .ok_or_else(|| format!("raster needs {len} bytes, file has {}", bytes.len().saturating_sub(pos)))?;
    let pixels = if maxval == 255 {
        body.to_vec()
    } else {
        body.iter()
            .map(|&v| ((v as usize * 255 + maxval / 2) / maxval).min(255) as u8)
            .collect()
    };
    Ok(Raster {
        width,
        height,
        channels,
        pixels,
    })
}

/// Linear min-max mapping onto 0..=255. A constant input maps to all zeros.
pub fn rescale_to_u8(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect()
}

/// Renders a grid (`H x W`, `1 x H x W` or `3 x H x W`) with min-max scaling.
pub fn raster_from_tensor(t: &Tensor) -> Result<Raster> {
    let (channels, height, width) = match *t.shape() {
        [h, w] => (1, h, w),
        [c @ (1 | 3), h, w] => (c, h, w),
        _ => {
            return Err(Error::Shape(format!(
                "cannot render tensor of shape {:?} as an image",
                t.shape()
            )))
        }
    };
    let scaled = rescale_to_u8(t.data());
    let plane = height * width;
    let mut pixels = vec![0u8; scaled.len()];
    for ch in 0..channels {
        for i in 0..plane {
            pixels[i * channels + ch] = scaled[ch * plane + i];
        }
    }
    Ok(Raster {
        width,
        height,
        channels,
        pixels,
    })
}

/// Writes a tensor as PGM or PPM, rescaled to the full 8-bit range.
pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    write(path, &raster_from_tensor(t)?)
}
