//! Local response normalization across neighbouring feature maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// `out[c] = in[c] / (k + alpha * sum_{c' in window(c)} in[c']^2)^beta`,
/// where `window(c)` spans `size` maps centred on `c`, clamped at the first
/// and last map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrnParams {
    pub size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams {
            size: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 1.0,
        }
    }
}

impl LrnParams {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "response-norm size {} must be odd",
                self.size
            )));
        }
        if !(self.k > 0.0) || self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "response-norm needs k > 0, alpha >= 0, beta >= 0 (got k={}, alpha={}, beta={})",
                self.k, self.alpha, self.beta
            )));
        }
        Ok(())
    }

    fn window(&self, c: usize, maps: usize) -> std::ops::Range<usize> {
        let half = self.size / 2;
        c.saturating_sub(half)..(c + half + 1).min(maps)
    }
}

/// Per-position denominators `k + alpha * sum(in^2)` for one batch element.
fn denominators(item: &[f64], maps: usize, plane: usize, p: &LrnParams) -> Vec<f64> {
    let mut denom = vec![p.k; item.len()];
    for c in 0..maps {
        let dst = &mut denom[c * plane..(c + 1) * plane];
        for c2 in p.window(c, maps) {
            let src = &item[c2 * plane..(c2 + 1) * plane];
            for (d, x) in dst.iter_mut().zip(src) {
                *d += p.alpha * x * x;
            }
        }
    }
    denom
}

pub fn lrn_forward(input: &Tensor4, params: &LrnParams) -> Result<Tensor4> {
    params.validate()?;
    let s = input.shape();
    let mut out = Tensor4::zeros(s);
    for n in 0..s.n {
        let item = input.item(n);
        let denom = denominators(item, s.c, s.plane_len(), params);
        for ((o, x), d) in out.item_mut(n).iter_mut().zip(item).zip(&denom) {
            *o = x * d.powf(-params.beta);
        }
    }
    Ok(out)
}

pub fn lrn_backward(input: &Tensor4, grad_output: &Tensor4, params: &LrnParams) -> Result<Tensor4> {
    params.validate()?;
    let s = input.shape();
    grad_output.expect_shape("lrn_backward", s)?;
    let plane = s.plane_len();
    let mut grad = Tensor4::zeros(s);
    for n in 0..s.n {
        let x = input.item(n);
        let g = grad_output.item(n);
        let denom = denominators(x, s.c, plane, params);
        // t[c] = g[c] * x[c] * D[c]^(-beta - 1)
        let t: Vec<f64> = (0..x.len())
            .map(|i| g[i] * x[i] * denom[i].powf(-params.beta - 1.0))
            .collect();
        let dst = grad.item_mut(n);
        for c in 0..s.c {
            for p in 0..plane {
                let i = c * plane + p;
                let mut cross = 0.0;
                // The window is symmetric, so j is in window(c) iff c is in window(j).
                for c2 in params.window(c, s.c) {
                    cross += t[c2 * plane + p];
                }
                dst[i] = g[i] * denom[i].powf(-params.beta)
                    - 2.0 * params.alpha * params.beta * x[i] * cross;
            }
        }
    }
    Ok(grad)
}
