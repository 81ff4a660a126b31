//! Small synthetic datasets for smoke tests and examples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

/// `n` images of shape `(c, h, w)` in `classes` well separated Gaussian
/// blobs. Class `k` adds a bright square in its own cell of a grid to
/// low-amplitude noise; labels cycle through the classes. The split is
/// named `blobs`; see [`blobs_split`] to name it.
pub fn blobs(n: usize, classes: usize, dims: (usize, usize, usize), seed: u64) -> Result<Dataset> {
    blobs_split(n, classes, dims, seed, "blobs")
}

/// [`blobs`] with an explicit split name.
pub fn blobs_split(n: usize, classes: usize, dims: (usize, usize, usize), seed: u64, split: &str) -> Result<Dataset> {
    let (c, h, w) = dims;
    if classes < 2 || c == 0 || h < 2 || w < 2 {
        return Err(Error::InvalidArgument("blobs need at least two classes and 2x2 images".into()));
    }
    let cols = (classes as f64).sqrt().ceil() as usize;
    let rows = classes.div_ceil(cols);
    let (ch, cw) = (h / rows, w / cols);
    if ch == 0 || cw == 0 {
        return Err(Error::InvalidArgument(format!("{h}x{w} images are too small for {classes} classes")));
    }
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let images = Tensor4::from_fn(Shape4::new(n, c, h, w), |i, _, y, x| {
        let k = labels[i];
        let (r0, c0) = ((k / cols) * ch, (k % cols) * cw);
        let inside = (r0..r0 + ch).contains(&y) && (c0..c0 + cw).contains(&x);
        let base = if inside { 1.0 } else { 0.0 };
        base + noise.sample(&mut rng)
    });
    Dataset::new(images, labels, classes, Provenance::new(split, vec![format!("blobs seed {seed}")]))
}
