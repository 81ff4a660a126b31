//! Top-down reconstructions of feature maps in pixel space.
//!
//! Starting from the output of a chosen layer, [`reconstruct`] walks the
//! network backwards: pooling layers are undone by [`unpool`] with switches
//! taken from a [`SwitchSource`], convolutions by [`deconv_layer`] (the
//! transposed filters), ReLU layers optionally clamp negatives, and response
//! normalization is passed through unchanged.

mod pnm;

use rayon::prelude::*;

pub use pnm::{encode_pnm, montage, normalize_to_bytes, write_pnm};

use crate::conv::{conv2d_transpose, ConvParams};
use crate::error::{Error, Result};
use crate::net::{ForwardTrace, Layer, LayerParams, NetParams, Network};
use crate::pooling::{place_at_switches, stochastic_pool_forward, uniform_switches, PoolingGeometry, SwitchMap};
use crate::rng::RngStream;
use crate::tensor::Tensor4;

/// Where the switches used to unpool one layer come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchSource {
    /// The switches recorded in the forward trace.
    Recorded,
    /// Fresh draws from the feed-forward multinomial over each region.
    FeedForward { seed: u64 },
    /// Fresh draws uniform over each region's cells.
    Uniform { seed: u64 },
}

impl SwitchSource {
    /// Same kind of source with a different seed (recorded sources are unchanged).
    pub fn reseeded(self, seed: u64) -> Self {
        match self {
            SwitchSource::Recorded => SwitchSource::Recorded,
            SwitchSource::FeedForward { .. } => SwitchSource::FeedForward { seed },
            SwitchSource::Uniform { .. } => SwitchSource::Uniform { seed },
        }
    }
}

/// Places each pooled value at its switch location in a zero map of the
/// pooling input's shape. Regions without a switch place nothing.
pub fn unpool(pooled: &Tensor4, switches: &SwitchMap, geometry: &PoolingGeometry) -> Result<Tensor4> {
    if switches.geometry() != geometry {
        return Err(Error::Switch("switch map was recorded with a different geometry".into()));
    }
    switches.validate()?;
    pooled.expect_shape("unpool", switches.output_shape())?;
    let mut out = Tensor4::zeros(switches.input_shape());
    place_at_switches(pooled, switches, &mut out);
    Ok(out)
}

/// Applies the transposed filters of a convolution layer (no bias), mapping
/// a feature map back to the layer's `input_hw`.
pub fn deconv_layer(feature: &Tensor4, params: &ConvParams, input_hw: (usize, usize)) -> Result<Tensor4> {
    conv2d_transpose(feature, params, input_hw)
}

/// Settings for [`reconstruct`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReconstructOptions {
    /// Clamp negatives to zero when passing a ReLU layer top-down.
    pub rectify: bool,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions { rectify: true }
    }
}

/// Maps the output of layer `from_layer` back to the input pixels.
///
/// `sources` holds one entry per pooling layer at or below `from_layer`, in
/// forward order. Resampling sources draw from per-layer child streams of
/// their seed, so results depend only on the trace and the seeds.
pub fn reconstruct(
    net: &Network,
    params: &NetParams,
    trace: &ForwardTrace,
    from_layer: usize,
    sources: &[SwitchSource],
    options: ReconstructOptions,
) -> Result<Tensor4> {
    let layers = net.layers();
    if from_layer >= layers.len() || matches!(layers[from_layer], Layer::Softmax { .. }) {
        return Err(Error::InvalidArgument(format!(
            "layer {from_layer} is not a feature layer of this {}-layer network",
            layers.len()
        )));
    }
    if trace.activations.len() != layers.len() + 1 {
        return Err(Error::InvalidArgument("trace was produced by a different network".into()));
    }
    let pools: Vec<usize> = net.pool_layers().into_iter().filter(|&i| i <= from_layer).collect();
    if sources.len() != pools.len() {
        return Err(Error::InvalidArgument(format!(
            "{} switch sources for {} pooling layers at or below layer {from_layer}",
            sources.len(),
            pools.len()
        )));
    }
    let mut feature = trace.activations[from_layer + 1].clone();
    for i in (0..=from_layer).rev() {
        let x = &trace.activations[i];
        feature = match (&layers[i], &params.layers[i]) {
            (Layer::Conv { .. }, LayerParams::Conv(p)) => {
                deconv_layer(&feature, p, (x.shape().h, x.shape().w))?
            }
            (Layer::Relu, _) if options.rectify => feature.map(|v| v.max(0.0)),
            (Layer::Relu, _) | (Layer::ResponseNorm(_), _) => feature,
            (Layer::Pool { geometry, .. }, _) => {
                let k = pools.iter().position(|&p| p == i).expect("pool layers were listed");
                let switches = layer_switches(trace, i, x, geometry, sources[k])?;
                unpool(&feature, &switches, geometry)?
            }
            _ => return Err(Error::InvalidArgument(format!("parameters do not match layer {i}"))),
        };
    }
    Ok(feature)
}

fn layer_switches(
    trace: &ForwardTrace,
    layer: usize,
    input: &Tensor4,
    geometry: &PoolingGeometry,
    source: SwitchSource,
) -> Result<SwitchMap> {
    match source {
        SwitchSource::Recorded => trace.pools[layer]
            .as_ref()
            .and_then(|r| r.switches.clone())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "pooling layer {layer} recorded no switches; run the forward pass with a selecting mode"
                ))
            }),
        SwitchSource::FeedForward { seed } => {
            Ok(stochastic_pool_forward(input, geometry, &mut RngStream::new(seed).child(layer as u64))?.1)
        }
        SwitchSource::Uniform { seed } => {
            Ok(uniform_switches(input, geometry, &mut RngStream::new(seed).child(layer as u64))?.1)
        }
    }
}

/// Reconstructions for `count` reseedings of `sources`, seeds `base_seed..`.
pub fn reconstruct_samples(
    net: &Network,
    params: &NetParams,
    trace: &ForwardTrace,
    from_layer: usize,
    sources: &[SwitchSource],
    base_seed: u64,
    count: usize,
    options: ReconstructOptions,
) -> Result<Vec<Tensor4>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let seeded: Vec<SwitchSource> = sources
                .iter()
                .enumerate()
                .map(|(j, s)| s.reseeded(base_seed.wrapping_add((k * sources.len() + j) as u64)))
                .collect();
            reconstruct(net, params, trace, from_layer, &seeded, options)
        })
        .collect()
}

/// Pearson correlation of two equally shaped tensors; 0 when either is constant.
pub fn normalized_cross_correlation(a: &Tensor4, b: &Tensor4) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::dim(
            "normalized_cross_correlation",
            format!("{} vs {}", a.shape(), b.shape()),
        ));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.data().iter().zip(b.data()) {
        let (dx, dy) = (x - ma, y - mb);
        ab += dx * dy;
        aa += dx * dx;
        bb += dy * dy;
    }
    if aa == 0.0 || bb == 0.0 {
        return Ok(0.0);
    }
    Ok(ab / (aa * bb).sqrt())
}

/// Mean correlation over all distinct pairs within `group`.
pub fn mean_self_similarity(group: &[Tensor4]) -> Result<f64> {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..group.len() {
        for j in i + 1..group.len() {
            total += normalized_cross_correlation(&group[i], &group[j])?;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::InvalidArgument("need at least two reconstructions".into()));
    }
    Ok(total / pairs as f64)
}

/// Mean correlation over all pairs with one element from each group.
pub fn mean_cross_similarity(a: &[Tensor4], b: &[Tensor4]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("need reconstructions in both groups".into()));
    }
    let mut total = 0.0;
    for x in a {
        for y in b {
            total += normalized_cross_correlation(x, y)?;
        }
    }
    Ok(total / (a.len() * b.len()) as f64)
}
