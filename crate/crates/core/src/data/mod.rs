//! Datasets: loaders for MNIST IDX and CIFAR binary files, preprocessing
//! and seeded subsampling.
//!
//! A [`Dataset`] carries an append-only [`Provenance`] so that every
//! transform applied to its pixels can be inspected and replayed.

mod cifar;
mod idx;
mod preprocess;
mod synthetic;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cifar::{convert_svhn_raw, load_cifar_binary, parse_cifar_records, write_cifar_records, CIFAR_IMAGE_BYTES};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use preprocess::{
    apply_mean, local_contrast_normalize, local_contrast_normalize_auto, per_pixel_mean_subtract,
    scale_unit, LCN_DEFAULT_RADIUS,
};
pub use synthetic::{blobs, blobs_split};

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// One transform recorded in a dataset's provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    ScaleUnit,
    /// Per-pixel mean subtraction with statistics from the named split.
    MeanSubtract { statistics_from: String },
    /// `floor: None` means the per-plane mean of local deviations.
    LocalContrast { radius: usize, floor: Option<f64> },
    Subsample { n: usize, of: usize, seed: u64 },
    Holdout { n: usize, seed: u64, part: String },
}

/// Where a dataset came from and what has been done to it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// Split name such as `"train"` or `"test"`.
    pub split: String,
    pub sources: Vec<String>,
    steps: Vec<Step>,
}

impl Provenance {
    pub fn new(split: impl Into<String>, sources: Vec<String>) -> Self {
        Provenance {
            split: split.into(),
            sources,
            steps: Vec::new(),
        }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn has(&self, pred: impl Fn(&Step) -> bool) -> bool {
        self.steps.iter().any(pred)
    }

    pub(crate) fn push(&mut self, step: Step) {
        self.steps.push(step);
    }
}

/// Images `(n, c, h, w)` with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor4,
    labels: Vec<usize>,
    classes: usize,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(images: Tensor4, labels: Vec<usize>, classes: usize, provenance: Provenance) -> Result<Self> {
        if images.shape().n != labels.len() {
            return Err(Error::dim(
                "Dataset::new",
                format!("{} images but {} labels", images.shape().n, labels.len()),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::format("dataset", format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Dataset {
            images,
            labels,
            classes,
            provenance,
        })
    }

    pub fn images(&self) -> &Tensor4 {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-image shape `(c, h, w)`.
    pub fn image_dims(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s.c, s.h, s.w)
    }

    /// Images and labels at `indices`, in that order.
    pub fn batch(&self, indices: &[usize]) -> (Tensor4, Vec<usize>) {
        (
            self.images.select(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Number of examples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    fn with_pixels(&self, images: Tensor4, step: Step) -> Dataset {
        let mut provenance = self.provenance.clone();
        provenance.push(step);
        Dataset {
            images,
            labels: self.labels.clone(),
            classes: self.classes,
            provenance,
        }
    }

    fn subset(&self, indices: &[usize], step: Step) -> Dataset {
        let (images, labels) = self.batch(indices);
        let mut provenance = self.provenance.clone();
        provenance.push(step);
        Dataset {
            images,
            labels,
            classes: self.classes,
            provenance,
        }
    }
}

/// Uniform sample of `n` examples without replacement, kept in their
/// original order. The same `(n, seed)` always picks the same examples.
pub fn subsample(dataset: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {n} examples from a dataset of {}",
            dataset.len()
        )));
    }
    let mut indices = sample_indices(dataset.len(), n, seed);
    indices.sort_unstable();
    Ok(dataset.subset(
        &indices,
        Step::Subsample {
            n,
            of: dataset.len(),
            seed,
        },
    ))
}

/// Splits off `n` random examples as a validation set: `(rest, held_out)`.
pub fn holdout(dataset: &Dataset, n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n >= dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot hold out {n} of {} examples",
            dataset.len()
        )));
    }
    let mut held = sample_indices(dataset.len(), n, seed);
    held.sort_unstable();
    let mut mask = vec![false; dataset.len()];
    held.iter().for_each(|&i| mask[i] = true);
    let rest: Vec<usize> = (0..dataset.len()).filter(|&i| !mask[i]).collect();
    let step = |part: &str| Step::Holdout {
        n,
        seed,
        part: part.into(),
    };
    Ok((dataset.subset(&rest, step("rest")), dataset.subset(&held, step("held_out"))))
}

fn sample_indices(len: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, len, n).into_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape4;

    fn numbered(n: usize) -> Dataset {
        let images = Tensor4::from_fn(Shape4::new(n, 1, 1, 1), |i, _, _, _| i as f64);
        let labels = (0..n).map(|i| i % 3).collect();
        Dataset::new(images, labels, 3, Provenance::new("train", vec![])).unwrap()
    }

    #[test]
    fn rejects_label_count_mismatch_and_range() {
        let images = Tensor4::zeros(Shape4::new(2, 1, 1, 1));
        assert!(Dataset::new(images.clone(), vec![0], 2, Provenance::default()).is_err());
        assert!(Dataset::new(images, vec![0, 2], 2, Provenance::default()).is_err());
    }

    #[test]
    fn full_subsample_is_the_same_multiset() {
        let d = numbered(20);
        let s = subsample(&d, 20, 9).unwrap();
        let mut values: Vec<f64> = s.images().data().to_vec();
        values.sort_by(f64::total_cmp);
        assert_eq!(values, d.images().data());
        assert_eq!(s.class_counts(), d.class_counts());
    }

    #[test]
    fn subsample_is_seed_deterministic_and_recorded() {
        let d = numbered(100);
        let a = subsample(&d, 10, 5).unwrap();
        assert_eq!(a, subsample(&d, 10, 5).unwrap());
        assert_ne!(a.images(), subsample(&d, 10, 6).unwrap().images());
        assert_eq!(a.provenance().steps(), &[Step::Subsample { n: 10, of: 100, seed: 5 }]);
        assert!(subsample(&d, 101, 0).is_err());
    }

    #[test]
    fn inclusion_frequency_matches_n_over_size() {
        let (size, n, trials) = (50, 10, 4000);
        let d = numbered(size);
        let mut hits = vec![0usize; size];
        for seed in 0..trials {
            for v in subsample(&d, n, seed).unwrap().images().data() {
                hits[*v as usize] += 1;
            }
        }
        let p = n as f64 / size as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        let z: Vec<f64> = hits.iter().map(|h| (*h as f64 - trials as f64 * p) / sigma).collect();
        // Every index stays within a loose 5 sigma, and the squared z-scores
        // sum below the chi-square(49) critical value at significance 0.001.
        assert!(z.iter().all(|z| z.abs() < 5.0), "{z:?}");
        let chi2: f64 = z.iter().map(|z| z * z).sum();
        assert!(chi2 < 85.35, "chi-square {chi2}");
    }

    #[test]
    fn holdout_partitions() {
        let d = numbered(30);
        let (rest, held) = holdout(&d, 5, 1).unwrap();
        assert_eq!((rest.len(), held.len()), (25, 5));
        let mut all: Vec<f64> = rest.images().data().iter().chain(held.images().data()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, d.images().data());
    }
}
