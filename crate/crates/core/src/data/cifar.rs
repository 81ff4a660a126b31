//! CIFAR binary batches and the SVHN raw converter.
//!
//! A CIFAR-10 record is one label byte followed by 3072 pixel bytes: the
//! 1024 red values row-major, then green, then blue. CIFAR-100 records carry
//! two label bytes (coarse, fine) before the pixels.

use std::fs;
use std::path::Path;

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

/// Pixel bytes per 32x32 RGB record.
pub const CIFAR_IMAGE_BYTES: usize = 3 * 32 * 32;

fn label_bytes(classes: usize) -> Result<usize> {
    match classes {
        10 => Ok(1),
        100 => Ok(2),
        other => Err(Error::InvalidArgument(format!(
            "CIFAR binaries have 10 or 100 classes, not {other}"
        ))),
    }
}

/// Decodes records into `(labels, planar pixel bytes)`. CIFAR-100 uses the
/// fine label.
pub fn parse_cifar_records(bytes: &[u8], classes: usize) -> Result<(Vec<usize>, Vec<u8>)> {
    let lb = label_bytes(classes)?;
    let record = lb + CIFAR_IMAGE_BYTES;
    if bytes.len() % record != 0 {
        return Err(Error::format(
            "CIFAR",
            format!("{} bytes is not a multiple of the {record}-byte record", bytes.len()),
        ));
    }
    let n = bytes.len() / record;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * CIFAR_IMAGE_BYTES);
    for r in bytes.chunks_exact(record) {
        labels.push(r[lb - 1] as usize);
        pixels.extend_from_slice(&r[lb..]);
    }
    Ok((labels, pixels))
}

/// Loads and concatenates CIFAR batch files as `(n, 3, 32, 32)` raw byte values.
pub fn load_cifar_binary<P: AsRef<Path>>(paths: &[P], classes: usize) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    let mut sources = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        let (l, px) = parse_cifar_records(&bytes, classes).map_err(|e| match e {
            Error::Format { format, detail } => Error::Format {
                format,
                detail: format!("{}: {detail}", p.display()),
            },
            other => other,
        })?;
        labels.extend(l);
        pixels.extend(px);
        sources.push(p.display().to_string());
    }
    let images = Tensor4::from_vec(
        Shape4::new(labels.len(), 3, 32, 32),
        pixels.into_iter().map(|b| b as f64).collect(),
    )?;
    let split = if sources.iter().any(|s| s.contains("test")) { "test" } else { "train" };
    Dataset::new(images, labels, classes, Provenance::new(split, sources))
}

/// Encodes `(label, planar pixels)` pairs as CIFAR-10 records.
pub fn write_cifar_records(labels: &[u8], pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != labels.len() * CIFAR_IMAGE_BYTES {
        return Err(Error::dim(
            "write_cifar_records",
            format!("{} labels need {} pixel bytes, got {}", labels.len(), labels.len() * CIFAR_IMAGE_BYTES, pixels.len()),
        ));
    }
    let mut out = Vec::with_capacity(labels.len() * (1 + CIFAR_IMAGE_BYTES));
    for (l, px) in labels.iter().zip(pixels.chunks_exact(CIFAR_IMAGE_BYTES)) {
        out.push(*l);
        out.extend_from_slice(px);
    }
    Ok(out)
}

/// Converts SVHN raw dumps into CIFAR-10 records.
///
/// Input contract: `images` holds `n` images of 32x32x3 bytes in
/// interleaved `(row, col, rgb)` order (the `.mat` array `X` transposed to
/// `(n, h, w, c)`); `labels` holds `n` bytes in `1..=10`, where 10 is the
/// digit 0. Output labels are the digit values `0..=9`.
pub fn convert_svhn_raw(images: &[u8], labels: &[u8]) -> Result<Vec<u8>> {
    let n = labels.len();
    if images.len() != n * CIFAR_IMAGE_BYTES {
        return Err(Error::format(
            "SVHN raw",
            format!("{n} labels need {} image bytes, found {}", n * CIFAR_IMAGE_BYTES, images.len()),
        ));
    }
    let mut digits = Vec::with_capacity(n);
    for (i, &l) in labels.iter().enumerate() {
        if !(1..=10).contains(&l) {
            return Err(Error::format("SVHN raw", format!("label {l} at record {i} outside 1..=10")));
        }
        digits.push(l % 10);
    }
    let mut planar = vec![0u8; images.len()];
    for (src, dst) in images.chunks_exact(CIFAR_IMAGE_BYTES).zip(planar.chunks_exact_mut(CIFAR_IMAGE_BYTES)) {
        for (p, rgb) in src.chunks_exact(3).enumerate() {
            for (c, v) in rgb.iter().enumerate() {
                dst[c * 1024 + p] = *v;
            }
        }
    }
    write_cifar_records(&digits, &planar)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One record written field by field.
    fn record(prefix: &[u8]) -> Vec<u8> {
        let mut r = prefix.to_vec();
        for c in 0..3u32 {
            for p in 0..1024u32 {
                r.push(((p * 7 + c * 85) % 256) as u8);
            }
        }
        r
    }

    #[test]
    fn one_record_fixture_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data_batch_1.bin");
        let rec = record(&[6]);
        fs::write(&path, &rec).unwrap();
        let d = load_cifar_binary(&[&path], 10).unwrap();
        assert_eq!(d.images().shape(), Shape4::new(1, 3, 32, 32));
        assert_eq!(d.labels(), &[6]);
        let bytes: Vec<u8> = d.images().data().iter().map(|&v| v as u8).collect();
        assert_eq!(bytes, rec[1..]);
        assert_eq!(d.images().at(0, 1, 0, 1), ((7 + 85) % 256) as f64);
    }

    #[test]
    fn cifar100_uses_fine_label() {
        let mut bytes = record(&[3, 77]);
        bytes.extend(record(&[19, 2]));
        let (labels, pixels) = parse_cifar_records(&bytes, 100).unwrap();
        assert_eq!(labels, vec![77, 2]);
        assert_eq!(pixels.len(), 2 * CIFAR_IMAGE_BYTES);
    }

    #[test]
    fn rejects_partial_records_and_bad_class_counts() {
        let bytes = record(&[1]);
        assert!(parse_cifar_records(&bytes[..3000], 10).is_err());
        assert!(parse_cifar_records(&bytes, 100).is_err());
        assert!(parse_cifar_records(&bytes, 20).is_err());
    }

    #[test]
    fn svhn_conversion_planarizes_and_maps_ten_to_zero() {
        let images: Vec<u8> = (0..2 * CIFAR_IMAGE_BYTES).map(|i| (i % 251) as u8).collect();
        let out = convert_svhn_raw(&images, &[10, 4]).unwrap();
        let (labels, planar) = parse_cifar_records(&out, 10).unwrap();
        assert_eq!(labels, vec![0, 4]);
        // Second image, green channel, pixel (row 1, col 2).
        let p = 32 + 2;
        assert_eq!(planar[CIFAR_IMAGE_BYTES + 1024 + p], images[CIFAR_IMAGE_BYTES + 3 * p + 1]);
        assert!(convert_svhn_raw(&images, &[0, 4]).is_err());
        assert!(convert_svhn_raw(&images[1..], &[1, 4]).is_err());
    }
}
