//! Helpers shared by unit tests: a tiny deterministic generator that is
//! independent of the library's sampling streams, and error metrics.

use crate::tensor::{Shape4, Tensor4};

pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407))
    }

    pub fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

pub fn random_tensor(rng: &mut Lcg, shape: Shape4, scale: f64) -> Tensor4 {
    Tensor4::from_fn(shape, |_, _, _, _| rng.uniform(-scale, scale))
}

/// Non-negative tensor where roughly `zero_frac` of the entries are exactly 0.
pub fn rectified_tensor(rng: &mut Lcg, shape: Shape4, zero_frac: f64) -> Tensor4 {
    Tensor4::from_fn(shape, |_, _, _, _| {
        if rng.next_f64() < zero_frac {
            0.0
        } else {
            rng.uniform(0.05, 2.0)
        }
    })
}

/// Largest `|a - b| / max(|a|, |b|, 1e-6)` over paired entries.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Central finite differences of `f` at `x` with step `eps`.
pub fn numeric_gradient(x: &Tensor4, eps: f64, mut f: impl FnMut(&Tensor4) -> f64) -> Tensor4 {
    let mut probe = x.clone();
    let mut grad = Tensor4::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    grad
}
