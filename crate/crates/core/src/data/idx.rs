//! MNIST IDX files: a big-endian magic number, big-endian `u32` dimensions,
//! then unsigned bytes.

use std::fs;
use std::path::Path;

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

/// Magic number of an IDX file holding unsigned-byte rank-3 data (images).
pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
/// Magic number of an IDX file holding unsigned-byte rank-1 data (labels).
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format("IDX", format!("truncated header ({} bytes)", bytes.len())))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::format(
            "IDX",
            format!("magic {magic:#010x}, expected {expected:#010x}"),
        ));
    }
    Ok(())
}

/// Decodes an image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    check_magic(bytes, IDX_IMAGE_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    let want = n * rows * cols;
    if body.len() != want {
        return Err(Error::format(
            "IDX",
            format!("{n} images of {rows}x{cols} need {want} bytes, found {}", body.len()),
        ));
    }
    Ok((n, rows, cols, body))
}

/// Decodes a label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    check_magic(bytes, IDX_LABEL_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::format(
            "IDX",
            format!("{n} labels declared, {} bytes present", body.len()),
        ));
    }
    Ok(body)
}

/// Loads an image file and its label file as a `(n, 1, rows, cols)`
/// dataset of raw byte values 0..=255 with 10 classes.
pub fn load_idx(image_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (image_path.as_ref(), label_path.as_ref());
    let image_bytes = fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let label_bytes = fs::read(lp).map_err(|e| Error::io(lp, e))?;
    let (n, rows, cols, pixels) = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if labels.len() != n {
        return Err(Error::format(
            "IDX",
            format!("{n} images but {} labels", labels.len()),
        ));
    }
    let images = Tensor4::from_vec(
        Shape4::new(n, 1, rows, cols),
        pixels.iter().map(|&b| b as f64).collect(),
    )?;
    let split = if ip.to_string_lossy().contains("t10k") { "test" } else { "train" };
    Dataset::new(
        images,
        labels.iter().map(|&l| l as usize).collect(),
        10,
        Provenance::new(split, vec![ip.display().to_string(), lp.display().to_string()]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Writes IDX files byte by byte, without the parser's helpers.
    fn fixture(dir: &Path, magic_labels: [u8; 4], label_count: u8) -> (std::path::PathBuf, std::path::PathBuf) {
        let mut img = vec![0x00, 0x00, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3];
        img.extend([0, 1, 2, 253, 254, 255, 7, 8, 9, 10, 11, 128]);
        let mut lab = magic_labels.to_vec();
        lab.extend([0, 0, 0, label_count]);
        lab.extend((0..label_count).map(|i| [3u8, 9][i as usize % 2]));
        let (ip, lp) = (dir.join("img-idx3-ubyte"), dir.join("lab-idx1-ubyte"));
        fs::write(&ip, img).unwrap();
        fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn two_image_fixture_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path(), [0, 0, 8, 1], 2);
        let d = load_idx(&ip, &lp).unwrap();
        assert_eq!(d.images().shape(), Shape4::new(2, 1, 2, 3));
        let bytes: Vec<u8> = d.images().data().iter().map(|&v| v as u8).collect();
        assert_eq!(bytes, [0, 1, 2, 253, 254, 255, 7, 8, 9, 10, 11, 128]);
        assert_eq!(d.labels(), &[3, 9]);
        assert_eq!(d.provenance().split, "train");
    }

    #[test]
    fn rejects_wrong_label_magic() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path(), [0, 0, 8, 3], 2);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Format { .. })));
    }

    #[test]
    fn rejects_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path(), [0, 0, 8, 1], 3);
        assert!(load_idx(&ip, &lp).is_err());
    }

    #[test]
    fn rejects_truncation() {
        let bytes = [0u8, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3];
        assert!(parse_idx_images(&bytes).is_err());
        assert!(parse_idx_images(&bytes[..10]).is_err());
        assert!(parse_idx_labels(&[0, 0, 8, 1, 0, 0, 0, 2, 5]).is_err());
    }
}
