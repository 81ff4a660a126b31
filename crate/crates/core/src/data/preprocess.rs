//! Pixel preprocessing: scaling to [0, 1], per-pixel mean subtraction and
//! local contrast normalization.

use rayon::prelude::*;

use super::{Dataset, Step};
use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

/// Default Gaussian window radius for [`local_contrast_normalize`].
pub const LCN_DEFAULT_RADIUS: usize = 4;

/// Divides raw byte values by 255. Refuses datasets that were already scaled.
pub fn scale_unit(dataset: &Dataset) -> Result<Dataset> {
    if dataset.provenance().has(|s| matches!(s, Step::ScaleUnit)) {
        return Err(Error::InvalidArgument("dataset is already scaled to [0, 1]".into()));
    }
    if let Some(v) = dataset.images().data().iter().find(|v| !(0.0..=255.0).contains(*v)) {
        return Err(Error::contract("scale_unit", format!("value {v} is not a raw byte")));
    }
    Ok(dataset.with_pixels(dataset.images().map(|v| v / 255.0), Step::ScaleUnit))
}

/// Subtracts the training set's per-pixel mean from `train` and every split
/// in `others`. Returns the transformed splits and the mean image `(1, c, h, w)`.
pub fn per_pixel_mean_subtract(train: &Dataset, others: &[&Dataset]) -> Result<(Dataset, Vec<Dataset>, Tensor4)> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("cannot take the mean of an empty training set".into()));
    }
    let s = train.images().shape();
    let item = s.item_len();
    let mut mean = vec![0.0; item];
    for n in 0..s.n {
        for (m, v) in mean.iter_mut().zip(train.images().item(n)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= s.n as f64);
    let mean = Tensor4::from_vec(s.with_batch(1), mean)?;
    let from = train.provenance().split.clone();
    let t = apply_mean(train, &mean, &from)?;
    let rest = others.iter().map(|d| apply_mean(d, &mean, &from)).collect::<Result<_>>()?;
    Ok((t, rest, mean))
}

/// Subtracts a stored mean image, recording which split it was computed on.
pub fn apply_mean(dataset: &Dataset, mean: &Tensor4, statistics_from: &str) -> Result<Dataset> {
    let s = dataset.images().shape();
    mean.expect_shape("apply_mean", s.with_batch(1))?;
    if dataset.provenance().has(|st| matches!(st, Step::MeanSubtract { .. })) {
        return Err(Error::InvalidArgument("mean already subtracted".into()));
    }
    let mut images = dataset.images().clone();
    for n in 0..s.n {
        for (v, m) in images.item_mut(n).iter_mut().zip(mean.data()) {
            *v -= m;
        }
    }
    Ok(dataset.with_pixels(
        images,
        Step::MeanSubtract {
            statistics_from: statistics_from.into(),
        },
    ))
}

/// Normalized 1-D Gaussian taps for a window of `2 * radius + 1`, sigma `radius / 2`.
fn gaussian_taps(radius: usize) -> Vec<f64> {
    let sigma = (radius as f64 / 2.0).max(0.5);
    (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Gaussian-weighted average of `plane` around every pixel, with the
/// window clipped at the borders and its weights renormalized.
fn weighted_mean(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let r = taps.len() / 2;
    let pass = |src: &[f64], len: usize, stride: usize, count: usize, step: usize| {
        let mut out = vec![0.0; src.len()];
        for line in 0..count {
            let base = line * step;
            for i in 0..len {
                let (lo, hi) = (i.saturating_sub(r), (i + r).min(len - 1));
                let (mut acc, mut norm) = (0.0, 0.0);
                for j in lo..=hi {
                    let t = taps[j + r - i];
                    acc += t * src[base + j * stride];
                    norm += t;
                }
                out[base + i * stride] = acc / norm;
            }
        }
        out
    };
    let rows = pass(plane, w, 1, h, w);
    pass(&rows, h, w, w, 1)
}

/// Per-plane contrast normalization: `(x - m) / max(sd, floor)` where `m`
/// and `sd` are the Gaussian-weighted local mean and deviation.
fn lcn_plane(plane: &mut [f64], h: usize, w: usize, taps: &[f64], floor: Option<f64>) {
    let mean = weighted_mean(plane, h, w, taps);
    let squares: Vec<f64> = plane.iter().map(|v| v * v).collect();
    let second = weighted_mean(&squares, h, w, taps);
    let sd: Vec<f64> = mean.iter().zip(&second).map(|(m, q)| (q - m * m).max(0.0).sqrt()).collect();
    let floor = floor.unwrap_or_else(|| {
        let avg = sd.iter().sum::<f64>() / sd.len() as f64;
        if avg > 0.0 { avg } else { 1.0 }
    });
    for ((v, m), s) in plane.iter_mut().zip(&mean).zip(&sd) {
        *v = (*v - m) / s.max(floor);
    }
}

fn lcn(dataset: &Dataset, radius: usize, floor: Option<f64>) -> Result<Dataset> {
    let s: Shape4 = dataset.images().shape();
    let taps = gaussian_taps(radius);
    let mut images = dataset.images().clone();
    images
        .data_mut()
        .par_chunks_mut(s.plane_len())
        .for_each(|plane| lcn_plane(plane, s.h, s.w, &taps, floor));
    Ok(dataset.with_pixels(images, Step::LocalContrast { radius, floor }))
}

/// Local contrast normalization of every channel with a fixed divisor floor.
pub fn local_contrast_normalize(dataset: &Dataset, radius: usize, epsilon_floor: f64) -> Result<Dataset> {
    if !(epsilon_floor > 0.0 && epsilon_floor.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "local contrast floor must be positive, got {epsilon_floor}"
        )));
    }
    lcn(dataset, radius, Some(epsilon_floor))
}

/// Local contrast normalization whose floor is, per image and channel, the
/// mean of the local deviations (1 for constant planes).
pub fn local_contrast_normalize_auto(dataset: &Dataset, radius: usize) -> Result<Dataset> {
    lcn(dataset, radius, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::testutil::Lcg;
    use proptest::prelude::*;

    fn dataset(images: Tensor4) -> Dataset {
        let n = images.shape().n;
        Dataset::new(images, vec![0; n], 2, Provenance::new("train", vec![])).unwrap()
    }

    fn random_images(seed: u64, shape: Shape4) -> Tensor4 {
        let mut rng = Lcg::new(seed);
        Tensor4::from_fn(shape, |_, _, _, _| (rng.next_f64() * 256.0).floor().min(255.0))
    }

    #[test]
    fn scale_unit_matches_division_and_refuses_reapplication() {
        let raw = dataset(random_images(1, Shape4::new(3, 2, 4, 4)));
        let scaled = scale_unit(&raw).unwrap();
        for (a, b) in scaled.images().data().iter().zip(raw.images().data()) {
            assert_eq!(*a, b / 255.0);
        }
        let edge = dataset(Tensor4::from_vec(Shape4::new(2, 1, 1, 1), vec![0.0, 255.0]).unwrap());
        assert_eq!(scale_unit(&edge).unwrap().images().data(), &[0.0, 1.0]);
        assert!(scale_unit(&scaled).is_err());
        assert_eq!(scaled.provenance().steps(), &[Step::ScaleUnit]);
    }

    #[test]
    fn mean_subtraction_uses_train_statistics_only() {
        let train = dataset(Tensor4::from_vec(Shape4::new(2, 1, 1, 2), vec![0.0, 1.0, 1.0, 1.0]).unwrap());
        let test = dataset(Tensor4::from_vec(Shape4::new(1, 1, 1, 2), vec![10.0, 10.0]).unwrap());
        let (t, rest, mean) = per_pixel_mean_subtract(&train, &[&test]).unwrap();
        assert_eq!(mean.data(), &[0.5, 1.0]);
        assert_eq!(t.images().data(), &[-0.5, 0.0, 0.5, 0.0]);
        assert_eq!(rest[0].images().data(), &[9.5, 9.0]);
        assert_eq!(
            rest[0].provenance().steps(),
            &[Step::MeanSubtract { statistics_from: "train".into() }]
        );
        assert!(apply_mean(&t, &mean, "train").is_err());
    }

    #[test]
    fn transformed_training_mean_is_zero() {
        let train = dataset(random_images(2, Shape4::new(7, 3, 5, 5)));
        let (t, _, _) = per_pixel_mean_subtract(&train, &[]).unwrap();
        let (recentered, _, mean) = per_pixel_mean_subtract(&dataset(t.images().clone()), &[]).unwrap();
        assert!(mean.max_abs() < 1e-12);
        assert_eq!(recentered.len(), 7);
        let constant = dataset(Tensor4::filled(Shape4::new(4, 1, 3, 3), 0.7));
        assert!(per_pixel_mean_subtract(&constant, &[]).unwrap().0.images().max_abs() < 1e-15);
    }

    #[test]
    fn mean_subtraction_rejects_shape_mismatch() {
        let a = dataset(Tensor4::zeros(Shape4::new(2, 1, 2, 2)));
        let b = dataset(Tensor4::zeros(Shape4::new(2, 1, 3, 3)));
        assert!(per_pixel_mean_subtract(&a, &[&b]).is_err());
    }

    #[test]
    fn lcn_of_constant_image_is_zero() {
        let d = dataset(Tensor4::filled(Shape4::new(1, 3, 9, 9), 0.4));
        assert!(local_contrast_normalize(&d, 4, 1e-3).unwrap().images().max_abs() < 1e-12);
        assert!(local_contrast_normalize_auto(&d, 4).unwrap().images().max_abs() < 1e-12);
        assert!(local_contrast_normalize(&d, 4, 0.0).is_err());
    }

    /// Recomputes the local statistics by brute force over the 2-D window.
    fn brute_stats(x: &Tensor4, c: usize, y: usize, xx: usize, r: usize) -> (f64, f64) {
        let s = x.shape();
        let sigma = r as f64 / 2.0;
        let (mut acc, mut acc2, mut norm) = (0.0, 0.0, 0.0);
        for i in y.saturating_sub(r)..=(y + r).min(s.h - 1) {
            for j in xx.saturating_sub(r)..=(xx + r).min(s.w - 1) {
                let d2 = ((i as f64 - y as f64).powi(2) + (j as f64 - xx as f64).powi(2)) / (2.0 * sigma * sigma);
                let wgt = (-d2).exp();
                let v = x.at(0, c, i, j);
                acc += wgt * v;
                acc2 += wgt * v * v;
                norm += wgt;
            }
        }
        let m = acc / norm;
        (m, (acc2 / norm - m * m).max(0.0).sqrt())
    }

    #[test]
    fn lcn_subtracts_local_mean_and_divides_by_local_deviation() {
        let x = random_images(3, Shape4::new(1, 2, 12, 10)).scale(1.0 / 255.0);
        let floor = 0.05;
        let y = local_contrast_normalize(&dataset(x.clone()), 4, floor).unwrap();
        for c in 0..2 {
            for i in 0..12 {
                for j in 0..10 {
                    let (m, sd) = brute_stats(&x, c, i, j, 4);
                    let expect = (x.at(0, c, i, j) - m) / sd.max(floor);
                    assert!((y.images().at(0, c, i, j) - expect).abs() < 1e-9);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn lcn_is_invariant_to_affine_rescaling(seed in 0u64..1000, a in 0.5f64..4.0, b in -3.0f64..3.0) {
            let x = random_images(seed, Shape4::new(1, 1, 10, 10)).scale(1.0 / 255.0);
            let floor = 1e-3;
            let y1 = local_contrast_normalize(&dataset(x.clone()), 4, floor).unwrap();
            let y2 = local_contrast_normalize(&dataset(x.map(|v| a * v + b)), 4, floor).unwrap();
            for i in 0..10 {
                for j in 0..10 {
                    let (_, sd) = brute_stats(&x, 0, i, j, 4);
                    if sd > floor && a * sd > floor {
                        let (u, v) = (y1.images().at(0, 0, i, j), y2.images().at(0, 0, i, j));
                        prop_assert!((u - v).abs() <= 1e-8 * u.abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn auto_floor_is_affine_invariant_everywhere() {
        let x = random_images(4, Shape4::new(2, 3, 8, 8));
        let y1 = local_contrast_normalize_auto(&dataset(x.clone()), 4).unwrap();
        let y2 = local_contrast_normalize_auto(&dataset(x.map(|v| 0.01 * v - 1.0)), 4).unwrap();
        let diff = y1.images().zip_map(y2.images(), |p, q| p - q).unwrap();
        assert!(diff.max_abs() < 1e-8);
    }
}
