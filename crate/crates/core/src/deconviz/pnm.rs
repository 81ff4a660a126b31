//! Binary PGM (`P5`) and PPM (`P6`) output.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

/// Min-max maps `values` onto 0..=255; a constant input maps to all zeros.
pub fn normalize_to_bytes(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

/// Encodes a `(1, 1, h, w)` image as PGM or a `(1, 3, h, w)` image as PPM,
/// min-max normalized over the whole image.
pub fn encode_pnm(image: &Tensor4) -> Result<Vec<u8>> {
    let s = image.shape();
    if s.n != 1 || !(s.c == 1 || s.c == 3) {
        return Err(Error::dim(
            "encode_pnm",
            format!("expected one image with 1 or 3 channels, got {s}"),
        ));
    }
    let bytes = normalize_to_bytes(image.data());
    let magic = if s.c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", s.w, s.h).into_bytes();
    if s.c == 1 {
        out.extend_from_slice(&bytes);
    } else {
        let plane = s.plane_len();
        for p in 0..plane {
            out.extend([bytes[p], bytes[plane + p], bytes[2 * plane + p]]);
        }
    }
    Ok(out)
}

pub fn write_pnm(path: impl AsRef<Path>, image: &Tensor4) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(image)?).map_err(|e| Error::io(path, e))
}

/// Tiles `(1, c, h, w)` images into a grid `cols` wide separated by `gap`
/// pixels. Each tile is min-max scaled to [0, 1]; gaps are 1.
pub fn montage(images: &[Tensor4], cols: usize, gap: usize) -> Result<Tensor4> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("montage of no images".into()))?
        .shape();
    if cols == 0 || images.iter().any(|im| im.shape() != first) || first.n != 1 {
        return Err(Error::dim("montage", "tiles must be single images of equal shape"));
    }
    let rows = images.len().div_ceil(cols);
    let (th, tw) = (first.h, first.w);
    let shape = Shape4::new(1, first.c, rows * th + (rows - 1) * gap, cols * tw + (cols - 1) * gap);
    let mut out = Tensor4::filled(shape, 1.0);
    for (k, im) in images.iter().enumerate() {
        let scaled: Vec<f64> = normalize_to_bytes(im.data()).iter().map(|&b| b as f64 / 255.0).collect();
        let (r0, c0) = ((k / cols) * (th + gap), (k % cols) * (tw + gap));
        for c in 0..first.c {
            for y in 0..th {
                for x in 0..tw {
                    *out.at_mut(0, c, r0 + y, c0 + x) = scaled[(c * th + y) * tw + x];
                }
            }
        }
    }
    Ok(out)
}
