//! Forward and backward kernels for every pooling mode.
//!
//! All kernels work plane by plane: batch elements run in parallel, and
//! within one element channels and regions are visited in row-major order.
//! Sampling kernels take one pre-split substream per batch element, so the
//! outcome for a given `(seed, input, geometry)` does not depend on the
//! thread count.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::geometry::{PoolingGeometry, Region};
use super::switches::SwitchMap;
use crate::error::{Error, Result};
use crate::rng::{unit_f64, RngStream};
use crate::tensor::{Shape4, Tensor4};

/// Multinomial over one region's activations, `p_i = a_i / sum(a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionDistribution {
    probabilities: Vec<f64>,
    degenerate: bool,
}

impl RegionDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// True when every activation was zero and no distribution exists.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

pub fn region_probabilities(activations: &[f64]) -> Result<RegionDistribution> {
    if let Some(bad) = activations.iter().find(|a| !(**a >= 0.0)) {
        return Err(Error::contract(
            "region_probabilities",
            format!("activation {bad} is negative; pooling regions must be rectified"),
        ));
    }
    let total: f64 = activations.iter().sum();
    if total == 0.0 {
        return Ok(RegionDistribution {
            probabilities: vec![0.0; activations.len()],
            degenerate: true,
        });
    }
    Ok(RegionDistribution {
        probabilities: activations.iter().map(|a| a / total).collect(),
        degenerate: false,
    })
}

fn input_plane_shape(input: Shape4, geometry: &PoolingGeometry, op: &'static str) -> Result<()> {
    geometry.validate()?;
    if (input.h, input.w) != geometry.input {
        return Err(Error::dim(
            op,
            format!(
                "input planes are {}x{}, geometry expects {}x{}",
                input.h, input.w, geometry.input.0, geometry.input.1
            ),
        ));
    }
    Ok(())
}

fn pooled_shape(input: Shape4, geometry: &PoolingGeometry) -> Shape4 {
    let (oh, ow) = geometry.output();
    Shape4::new(input.n, input.c, oh, ow)
}

fn check_rectified(input: &Tensor4, op: &'static str) -> Result<()> {
    if let Some(bad) = input.data().iter().find(|a| !(**a >= 0.0)) {
        return Err(Error::contract(
            op,
            format!("input contains {bad}; this mode needs non-negative (rectified) activations"),
        ));
    }
    Ok(())
}

/// Runs `f(plane_in, plane_out)` over every (n, c) plane pair in parallel per batch element.
fn for_each_plane<F>(input: &Tensor4, out: &mut Tensor4, f: F)
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let (ilen, olen) = (input.shape().plane_len(), out.shape().plane_len());
    let c = input.shape().c;
    out.data_mut()
        .par_chunks_mut(olen * c)
        .zip(input.data().par_chunks(ilen * c))
        .for_each(|(o, i)| {
            for (op, ip) in o.chunks_mut(olen).zip(i.chunks(ilen)) {
                f(ip, op);
            }
        });
}

pub fn avg_pool_forward(input: &Tensor4, geometry: &PoolingGeometry) -> Result<Tensor4> {
    input_plane_shape(input.shape(), geometry, "avg_pool_forward")?;
    let regions = geometry.regions();
    let w = geometry.input.1;
    let mut out = Tensor4::zeros(pooled_shape(input.shape(), geometry));
    for_each_plane(input, &mut out, |plane, pooled| {
        for (dst, r) in pooled.iter_mut().zip(&regions) {
            let sum: f64 = r.indices(w).map(|i| plane[i]).sum();
            *dst = sum / r.len() as f64;
        }
    });
    Ok(out)
}

pub fn avg_pool_backward(grad_output: &Tensor4, geometry: &PoolingGeometry) -> Result<Tensor4> {
    let go = grad_output.shape();
    if (go.h, go.w) != geometry.output() {
        return Err(Error::dim("avg_pool_backward", "grad_output does not match geometry"));
    }
    let regions = geometry.regions();
    let w = geometry.input.1;
    let mut grad = Tensor4::zeros(Shape4::new(go.n, go.c, geometry.input.0, geometry.input.1));
    scatter_planes(grad_output, &mut grad, |g_out, g_in| {
        for (g, r) in g_out.iter().zip(&regions) {
            let share = g / r.len() as f64;
            for i in r.indices(w) {
                g_in[i] += share;
            }
        }
    });
    Ok(grad)
}

/// Runs `f(grad_out_plane, grad_in_plane)` across planes; the inverse direction of [`for_each_plane`].
fn scatter_planes<F>(grad_output: &Tensor4, grad_input: &mut Tensor4, f: F)
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let (ilen, olen) = (grad_input.shape().plane_len(), grad_output.shape().plane_len());
    let c = grad_input.shape().c;
    grad_input
        .data_mut()
        .par_chunks_mut(ilen * c)
        .zip(grad_output.data().par_chunks(olen * c))
        .for_each(|(gi, go)| {
            for (ip, op) in gi.chunks_mut(ilen).zip(go.chunks(olen)) {
                f(op, ip);
            }
        });
}

/// Max pooling. Ties go to the lowest flat index, so an all-zero region
/// selects its first cell.
pub fn max_pool_forward(input: &Tensor4, geometry: &PoolingGeometry) -> Result<(Tensor4, SwitchMap)> {
    input_plane_shape(input.shape(), geometry, "max_pool_forward")?;
    let regions = geometry.regions();
    let w = geometry.input.1;
    select_by(input, geometry, |plane| {
        regions
            .iter()
            .map(|r| {
                let mut best = None::<(usize, f64)>;
                for i in r.indices(w) {
                    if best.map_or(true, |(_, v)| plane[i] > v) {
                        best = Some((i, plane[i]));
                    }
                }
                best.map(|(i, _)| i as u32)
            })
            .collect()
    })
}

/// Applies a per-plane selection rule to produce pooled values plus switches.
fn select_by<F>(input: &Tensor4, geometry: &PoolingGeometry, choose: F) -> Result<(Tensor4, SwitchMap)>
where
    F: Fn(&[f64]) -> Vec<Option<u32>> + Sync,
{
    let states = vec![(); input.shape().n];
    select_by_element(input, geometry, states, |_, item, plen| {
        item.chunks(plen).map(&choose).collect()
    })
}

/// Runs `choose(state, element, plane_len)` once per batch element, each with
/// its own state, and gathers pooled values and switches in batch order.
fn select_by_element<S, F>(
    input: &Tensor4,
    geometry: &PoolingGeometry,
    states: Vec<S>,
    choose: F,
) -> Result<(Tensor4, SwitchMap)>
where
    S: Send,
    F: Fn(S, &[f64], usize) -> Vec<Vec<Option<u32>>> + Sync,
{
    let s = input.shape();
    let plen = s.plane_len();
    let olen = geometry.output_len();
    let per_element: Vec<Vec<Vec<Option<u32>>>> = input
        .data()
        .par_chunks(s.item_len().max(1))
        .zip(states.into_par_iter())
        .map(|(item, state)| choose(state, item, plen))
        .collect();
    let mut out = Tensor4::zeros(pooled_shape(s, geometry));
    let mut cells = Vec::with_capacity(s.n * s.c * olen);
    for (n, planes) in per_element.into_iter().enumerate() {
        for (c, switches) in planes.into_iter().enumerate() {
            let plane = &input.item(n)[c * plen..(c + 1) * plen];
            let dst = &mut out.item_mut(n)[c * olen..(c + 1) * olen];
            for (d, sw) in dst.iter_mut().zip(&switches) {
                *d = sw.map_or(0.0, |l| plane[l as usize]);
            }
            cells.extend(switches);
        }
    }
    Ok((out, SwitchMap::from_cells(*geometry, s.n, s.c, cells)?))
}

/// Inverse-CDF draw from the region's multinomial. `None` for all-zero regions.
fn sample_region(plane: &[f64], region: &Region, width: usize, rng: &mut impl RngCore) -> Option<u32> {
    let total: f64 = region.indices(width).map(|i| plane[i]).sum();
    if total == 0.0 {
        return None;
    }
    let target = unit_f64(rng) * total;
    let mut cumulative = 0.0;
    let mut last_positive = None;
    for i in region.indices(width) {
        let a = plane[i];
        if a > 0.0 {
            cumulative += a;
            last_positive = Some(i as u32);
            if cumulative > target {
                return last_positive;
            }
        }
    }
    // Rounding can leave `cumulative` a hair below `target`.
    last_positive
}

/// Stochastic pooling: per region, draw `l` with probability `a_l / sum(a)`
/// and output `a_l`.
///
/// One substream is taken from `stream` per batch element, in batch order;
/// within an element one uniform is consumed per region, channel-major then
/// row-major over regions.
pub fn stochastic_pool_forward(
    input: &Tensor4,
    geometry: &PoolingGeometry,
    stream: &mut RngStream,
) -> Result<(Tensor4, SwitchMap)> {
    input_plane_shape(input.shape(), geometry, "stochastic_pool_forward")?;
    check_rectified(input, "stochastic_pool_forward")?;
    let rngs = stream.take_substreams(input.shape().n);
    sample_with(input, geometry, rngs, |plane, r, w, rng| sample_region(plane, r, w, rng))
}

/// Uniform resampling over each region's cells, ignoring activation values.
pub fn uniform_switches(
    input: &Tensor4,
    geometry: &PoolingGeometry,
    stream: &mut RngStream,
) -> Result<(Tensor4, SwitchMap)> {
    input_plane_shape(input.shape(), geometry, "uniform_switches")?;
    let rngs = stream.take_substreams(input.shape().n);
    sample_with(input, geometry, rngs, |_, r, w, rng| {
        let k = ((unit_f64(rng) * r.len() as f64) as usize).min(r.len() - 1);
        r.indices(w).nth(k).map(|i| i as u32)
    })
}

fn sample_with<F>(
    input: &Tensor4,
    geometry: &PoolingGeometry,
    rngs: Vec<ChaCha8Rng>,
    draw: F,
) -> Result<(Tensor4, SwitchMap)>
where
    F: Fn(&[f64], &Region, usize, &mut ChaCha8Rng) -> Option<u32> + Sync,
{
    let regions = geometry.regions();
    let w = geometry.input.1;
    select_by_element(input, geometry, rngs, |mut rng, item, plen| {
        item.chunks(plen)
            .map(|plane| regions.iter().map(|r| draw(plane, r, w, &mut rng)).collect())
            .collect()
    })
}

/// Pools by reading each region at a fixed, previously recorded switch.
pub fn replay_pool_forward(input: &Tensor4, switches: &SwitchMap) -> Result<Tensor4> {
    input.expect_shape("replay_pool_forward", switches.input_shape())?;
    let shape = switches.output_shape();
    let mut out = Tensor4::zeros(shape);
    let plen = input.shape().plane_len();
    for n in 0..shape.n {
        for c in 0..shape.c {
            let plane = &input.item(n)[c * plen..(c + 1) * plen];
            for (j, sw) in switches.plane(n, c).iter().enumerate() {
                if let Some(l) = sw {
                    out.item_mut(n)[c * shape.plane_len() + j] = plane[*l as usize];
                }
            }
        }
    }
    Ok(out)
}

/// Routes each region's upstream gradient to its recorded switch location.
/// Regions without a switch contribute nothing; overlaps accumulate.
pub fn switch_pool_backward(
    grad_output: &Tensor4,
    switches: &SwitchMap,
    geometry: &PoolingGeometry,
) -> Result<Tensor4> {
    if switches.geometry() != geometry {
        return Err(Error::Switch("switch map was recorded with a different geometry".into()));
    }
    switches.validate()?;
    grad_output.expect_shape("switch_pool_backward", switches.output_shape())?;
    let mut grad = Tensor4::zeros(switches.input_shape());
    place_at_switches(grad_output, switches, &mut grad);
    Ok(grad)
}

pub(crate) fn place_at_switches(values: &Tensor4, switches: &SwitchMap, dst: &mut Tensor4) {
    let s = values.shape();
    let (olen, ilen) = (s.plane_len(), dst.shape().plane_len());
    for n in 0..s.n {
        for c in 0..s.c {
            let src = &values.item(n)[c * olen..(c + 1) * olen];
            let plane = &mut dst.item_mut(n)[c * ilen..(c + 1) * ilen];
            for (v, sw) in src.iter().zip(switches.plane(n, c)) {
                if let Some(l) = sw {
                    plane[*l as usize] += v;
                }
            }
        }
    }
}

/// Probabilistic weighting, `s = sum(a_i^2) / sum(a_i)`; all-zero regions give 0.
pub fn prob_weight_forward(input: &Tensor4, geometry: &PoolingGeometry) -> Result<Tensor4> {
    input_plane_shape(input.shape(), geometry, "prob_weight_forward")?;
    check_rectified(input, "prob_weight_forward")?;
    let regions = geometry.regions();
    let w = geometry.input.1;
    let mut out = Tensor4::zeros(pooled_shape(input.shape(), geometry));
    for_each_plane(input, &mut out, |plane, pooled| {
        for (dst, r) in pooled.iter_mut().zip(&regions) {
            let (mut s, mut q) = (0.0, 0.0);
            for i in r.indices(w) {
                s += plane[i];
                q += plane[i] * plane[i];
            }
            *dst = if s > 0.0 { q / s } else { 0.0 };
        }
    });
    Ok(out)
}

/// Exact gradient of [`prob_weight_forward`]: `ds/da_m = (2 a_m S - Q) / S^2`.
pub fn prob_weight_backward(
    input: &Tensor4,
    geometry: &PoolingGeometry,
    grad_output: &Tensor4,
) -> Result<Tensor4> {
    input_plane_shape(input.shape(), geometry, "prob_weight_backward")?;
    check_rectified(input, "prob_weight_backward")?;
    grad_output.expect_shape("prob_weight_backward", pooled_shape(input.shape(), geometry))?;
    let regions = geometry.regions();
    let w = geometry.input.1;
    let mut grad = Tensor4::zeros(input.shape());
    let (ilen, olen) = (input.shape().plane_len(), geometry.output_len());
    let c = input.shape().c;
    grad.data_mut()
        .par_chunks_mut(ilen * c)
        .zip(input.data().par_chunks(ilen * c))
        .zip(grad_output.data().par_chunks(olen * c))
        .for_each(|((gi, item), go)| {
            for ((gplane, plane), gout) in gi.chunks_mut(ilen).zip(item.chunks(ilen)).zip(go.chunks(olen)) {
                for (g, r) in gout.iter().zip(&regions) {
                    let (mut s, mut q) = (0.0, 0.0);
                    for i in r.indices(w) {
                        s += plane[i];
                        q += plane[i] * plane[i];
                    }
                    if s == 0.0 {
                        continue;
                    }
                    let inv = g / (s * s);
                    for i in r.indices(w) {
                        gplane[i] += (2.0 * plane[i] * s - q) * inv;
                    }
                }
            }
        });
    Ok(grad)
}
