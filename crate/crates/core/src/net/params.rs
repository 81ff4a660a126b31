use rand_distr::{Distribution, Normal};

use super::softmax::DenseParams;
use super::spec::{Layer, Network};
use crate::conv::ConvParams;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{Shape4, Tensor4};

/// Learning-rate group of a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Conv,
    Softmax,
}

/// Trainable state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Conv(ConvParams),
    Dense(DenseParams),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamInfo {
    pub layer: usize,
    pub group: ParamGroup,
    pub is_bias: bool,
    pub shape: Shape4,
}

impl ParamInfo {
    /// File-system friendly name such as `layer00_conv_filters`.
    pub fn name(&self) -> String {
        let kind = match self.group {
            ParamGroup::Conv => "conv",
            ParamGroup::Softmax => "softmax",
        };
        let part = match (self.group, self.is_bias) {
            (_, true) => "bias",
            (ParamGroup::Conv, false) => "filters",
            (ParamGroup::Softmax, false) => "weights",
        };
        format!("layer{:02}_{kind}_{part}", self.layer)
    }

    /// Biases are not weight-decayed.
    pub fn decays(&self) -> bool {
        !self.is_bias
    }
}

/// Parameters of a whole network, one entry per layer. The same type holds
/// gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub layers: Vec<LayerParams>,
}

impl NetParams {
    /// Gaussian weights with the spec's `init_std`, zero biases.
    pub fn init(net: &Network, stream: &mut RngStream) -> Self {
        let std = net.spec().init_std;
        let normal = Normal::new(0.0, std).expect("init_std must be finite and non-negative");
        let mut rng = stream.next_substream();
        let mut draw = |shape: Shape4| {
            Tensor4::from_fn(shape, |_, _, _, _| normal.sample(&mut rng))
        };
        let layers = net
            .layers()
            .iter()
            .map(|layer| match *layer {
                Layer::Conv {
                    maps,
                    kernel,
                    geometry,
                    in_maps,
                } => LayerParams::Conv(ConvParams {
                    filters: draw(Shape4::new(maps, in_maps, kernel, kernel)),
                    bias: vec![0.0; maps],
                    geometry,
                }),
                Layer::Softmax { inputs, classes } => LayerParams::Dense(DenseParams {
                    weights: draw(Shape4::new(classes, inputs, 1, 1)),
                    bias: vec![0.0; classes],
                }),
                _ => LayerParams::None,
            })
            .collect();
        NetParams { layers }
    }

    /// All-zero parameters shaped like `self`.
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerParams::Conv(p) => LayerParams::Conv(ConvParams {
                    filters: Tensor4::zeros(p.filters.shape()),
                    bias: vec![0.0; p.bias.len()],
                    geometry: p.geometry,
                }),
                LayerParams::Dense(p) => LayerParams::Dense(DenseParams {
                    weights: Tensor4::zeros(p.weights.shape()),
                    bias: vec![0.0; p.bias.len()],
                }),
                LayerParams::None => LayerParams::None,
            })
            .collect();
        NetParams { layers }
    }

    /// Checks that the parameter shapes fit `net`.
    pub fn check(&self, net: &Network) -> Result<()> {
        if self.layers.len() != net.layers().len() {
            return Err(Error::dim(
                "NetParams",
                format!("{} parameter slots for {} layers", self.layers.len(), net.layers().len()),
            ));
        }
        for (i, (p, l)) in self.layers.iter().zip(net.layers()).enumerate() {
            let ok = match (p, l) {
                (LayerParams::Conv(c), Layer::Conv { maps, kernel, in_maps, .. }) => {
                    c.filters.shape() == Shape4::new(*maps, *in_maps, *kernel, *kernel)
                        && c.bias.len() == *maps
                }
                (LayerParams::Dense(d), Layer::Softmax { inputs, classes }) => {
                    d.weights.shape() == Shape4::new(*classes, *inputs, 1, 1) && d.bias.len() == *classes
                }
                (LayerParams::None, Layer::Relu | Layer::Pool { .. } | Layer::ResponseNorm(_)) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::dim(
                    "NetParams",
                    format!("parameters of layer {i} do not fit a {} layer", l.kind()),
                ));
            }
        }
        Ok(())
    }

    /// Every parameter tensor with its metadata, in layer order (weights before bias).
    pub fn entries(&self) -> Vec<(ParamInfo, &[f64])> {
        let mut out = Vec::new();
        for (layer, p) in self.layers.iter().enumerate() {
            match p {
                LayerParams::Conv(c) => {
                    let group = ParamGroup::Conv;
                    out.push((ParamInfo { layer, group, is_bias: false, shape: c.filters.shape() }, c.filters.data()));
                    out.push((ParamInfo { layer, group, is_bias: true, shape: bias_shape(c.bias.len()) }, &c.bias[..]));
                }
                LayerParams::Dense(d) => {
                    let group = ParamGroup::Softmax;
                    out.push((ParamInfo { layer, group, is_bias: false, shape: d.weights.shape() }, d.weights.data()));
                    out.push((ParamInfo { layer, group, is_bias: true, shape: bias_shape(d.bias.len()) }, &d.bias[..]));
                }
                LayerParams::None => {}
            }
        }
        out
    }

    pub fn entries_mut(&mut self) -> Vec<(ParamInfo, &mut [f64])> {
        let mut out = Vec::new();
        for (layer, p) in self.layers.iter_mut().enumerate() {
            match p {
                LayerParams::Conv(c) => {
                    let group = ParamGroup::Conv;
                    let fs = c.filters.shape();
                    let bs = bias_shape(c.bias.len());
                    out.push((ParamInfo { layer, group, is_bias: false, shape: fs }, c.filters.data_mut()));
                    out.push((ParamInfo { layer, group, is_bias: true, shape: bs }, &mut c.bias[..]));
                }
                LayerParams::Dense(d) => {
                    let group = ParamGroup::Softmax;
                    let ws = d.weights.shape();
                    let bs = bias_shape(d.bias.len());
                    out.push((ParamInfo { layer, group, is_bias: false, shape: ws }, d.weights.data_mut()));
                    out.push((ParamInfo { layer, group, is_bias: true, shape: bs }, &mut d.bias[..]));
                }
                LayerParams::None => {}
            }
        }
        out
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries().iter().map(|(_, v)| v.len()).sum()
    }

    /// Parameter tensors as [`Tensor4`] values, for serialization.
    pub fn tensors(&self) -> Vec<(ParamInfo, Tensor4)> {
        self.entries()
            .into_iter()
            .map(|(info, v)| (info, Tensor4::from_vec(info.shape, v.to_vec()).expect("entry shape")))
            .collect()
    }

    /// Overwrites parameter values from tensors listed in [`NetParams::entries`] order.
    pub fn load_tensors(&mut self, tensors: &[Tensor4]) -> Result<()> {
        let mut entries = self.entries_mut();
        if entries.len() != tensors.len() {
            return Err(Error::dim(
                "NetParams::load_tensors",
                format!("{} tensors for {} parameters", tensors.len(), entries.len()),
            ));
        }
        for ((info, dst), src) in entries.iter_mut().zip(tensors) {
            if src.shape() != info.shape {
                return Err(Error::dim(
                    "NetParams::load_tensors",
                    format!("{} expects {}, got {}", info.name(), info.shape, src.shape()),
                ));
            }
            dst.copy_from_slice(src.data());
        }
        Ok(())
    }
}

fn bias_shape(len: usize) -> Shape4 {
    Shape4::new(1, len, 1, 1)
}
