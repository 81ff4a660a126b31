use serde::{Deserialize, Serialize};

use super::lrn::LrnParams;
use crate::conv::{conv_output_shape, ConvGeometry};
use crate::error::{Error, Result};
use crate::pooling::{PoolingGeometry, PoolingMode};
use crate::rng::splitmix64;
use crate::tensor::Shape4;

fn default_stride() -> usize {
    1
}

/// One layer of a [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        maps: usize,
        kernel: usize,
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Relu,
    Pool {
        size: usize,
        stride: usize,
        train: PoolingMode,
        test: PoolingMode,
    },
    ResponseNorm(LrnParams),
    Softmax {
        classes: usize,
    },
}

/// Declarative layer stack over inputs of shape `(channels, height, width)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
    /// Standard deviation of the zero-mean Gaussian used for weights.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_init_std() -> f64 {
    0.01
}

/// Layer with every shape resolved against the network input.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv {
        maps: usize,
        kernel: usize,
        geometry: ConvGeometry,
        in_maps: usize,
    },
    Relu,
    Pool {
        geometry: PoolingGeometry,
        train: PoolingMode,
        test: PoolingMode,
    },
    ResponseNorm(LrnParams),
    Softmax {
        inputs: usize,
        classes: usize,
    },
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv { .. } => "conv",
            Layer::Relu => "relu",
            Layer::Pool { .. } => "pool",
            Layer::ResponseNorm(_) => "response_norm",
            Layer::Softmax { .. } => "softmax",
        }
    }
}

/// A [`NetworkSpec`] with shapes checked and resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    /// `shapes[i]` is the per-item input shape of layer `i` (batch 1);
    /// the last entry is the classifier output.
    shapes: Vec<Shape4>,
}

/// Preset names accepted by [`NetworkSpec::preset`].
pub const PRESETS: &[&str] = &["full-64-64-64", "full-64-64-128", "desk-16-16-16"];

impl NetworkSpec {
    /// Stack of `maps.len()` blocks of 5x5 conv, ReLU, 3x3/2 pooling and
    /// response normalization, followed by a softmax classifier.
    pub fn conv_stack(
        input: (usize, usize, usize),
        maps: &[usize],
        classes: usize,
        pool: (usize, usize),
        train: PoolingMode,
        test: PoolingMode,
        lrn: Option<LrnParams>,
    ) -> Self {
        let mut layers = Vec::new();
        for &m in maps {
            layers.push(LayerSpec::Conv {
                maps: m,
                kernel: 5,
                stride: 1,
                padding: 2,
            });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::Pool {
                size: pool.0,
                stride: pool.1,
                train,
                test,
            });
            if let Some(p) = lrn {
                layers.push(LayerSpec::ResponseNorm(p));
            }
        }
        layers.push(LayerSpec::Softmax { classes });
        NetworkSpec {
            input,
            layers,
            init_std: default_init_std(),
        }
    }

    pub fn preset(
        name: &str,
        input: (usize, usize, usize),
        classes: usize,
        train: PoolingMode,
        test: PoolingMode,
    ) -> Result<Self> {
        let maps: &[usize] = match name {
            "full-64-64-64" => &[64, 64, 64],
            "full-64-64-128" => &[64, 64, 128],
            "desk-16-16-16" => &[16, 16, 16],
            other => {
                return Err(Error::Config(format!(
                    "unknown network preset {other:?}; known: {}",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(NetworkSpec::conv_stack(
            input,
            maps,
            classes,
            (3, 2),
            train,
            test,
            Some(LrnParams::default()),
        ))
    }

    /// Same stack with every pooling layer switched to `size x size` windows.
    pub fn with_pool_size(&self, size: usize, stride: usize) -> Self {
        let mut spec = self.clone();
        for layer in &mut spec.layers {
            if let LayerSpec::Pool { size: s, stride: st, .. } = layer {
                *s = size;
                *st = stride;
            }
        }
        spec
    }

    /// Same stack with every pooling layer using the given modes.
    pub fn with_pool_modes(&self, train: PoolingMode, test: PoolingMode) -> Self {
        let mut spec = self.clone();
        for layer in &mut spec.layers {
            if let LayerSpec::Pool { train: t, test: e, .. } = layer {
                *t = train;
                *e = test;
            }
        }
        spec
    }

    /// Same stack without response-normalization layers.
    pub fn without_lrn(&self) -> Self {
        let mut spec = self.clone();
        spec.layers.retain(|l| !matches!(l, LayerSpec::ResponseNorm(_)));
        spec
    }

    /// Stable 64-bit fingerprint of the architecture, recorded in checkpoints.
    /// Pooling modes are excluded: they do not change parameter shapes.
    pub fn fingerprint(&self) -> u64 {
        let arch = self.with_pool_modes(PoolingMode::Max, PoolingMode::Max);
        let json = serde_json::to_string(&arch).expect("network specs always serialize");
        json.bytes()
            .fold(0xCBF2_9CE4_8422_2325u64, |h, b| splitmix64(h ^ b as u64))
    }

    pub fn resolve(&self) -> Result<Network> {
        let (c, h, w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config("network input dims must be positive".into()));
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Softmax { .. })) {
            return Err(Error::Config("a network must end in a softmax layer".into()));
        }
        let mut shape = Shape4::new(1, c, h, w);
        let mut shapes = vec![shape];
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, spec) in self.layers.iter().enumerate() {
            let layer = match *spec {
                LayerSpec::Conv {
                    maps,
                    kernel,
                    stride,
                    padding,
                } => {
                    if maps == 0 || kernel == 0 || stride == 0 {
                        return Err(Error::Config(format!("layer {i}: conv dims must be positive")));
                    }
                    let geometry = ConvGeometry { stride, padding };
                    shape = conv_output_shape(shape, Shape4::new(maps, shape.c, kernel, kernel), geometry)
                        .map_err(|e| Error::Config(format!("layer {i}: {e}")))?;
                    Layer::Conv {
                        maps,
                        kernel,
                        geometry,
                        in_maps: shapes.last().unwrap().c,
                    }
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Pool {
                    size,
                    stride,
                    train,
                    test,
                } => {
                    let geometry = PoolingGeometry::square(size, stride, (shape.h, shape.w))
                        .map_err(|e| Error::Config(format!("layer {i}: {e}")))?;
                    let (oh, ow) = geometry.output();
                    shape = Shape4::new(1, shape.c, oh, ow);
                    Layer::Pool {
                        geometry,
                        train: train.validate()?,
                        test: test.validate()?,
                    }
                }
                LayerSpec::ResponseNorm(p) => {
                    p.validate()?;
                    Layer::ResponseNorm(p)
                }
                LayerSpec::Softmax { classes } => {
                    if i + 1 != self.layers.len() {
                        return Err(Error::Config("softmax must be the last layer".into()));
                    }
                    if classes < 2 {
                        return Err(Error::Config("softmax needs at least two classes".into()));
                    }
                    let inputs = shape.item_len();
                    shape = Shape4::new(1, classes, 1, 1);
                    Layer::Softmax { inputs, classes }
                }
            };
            layers.push(layer);
            shapes.push(shape);
        }
        Ok(Network {
            spec: self.clone(),
            layers,
            shapes,
        })
    }
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Per-item input shape of layer `index`, batch dimension 1.
    pub fn input_shape(&self, index: usize) -> Shape4 {
        self.shapes[index]
    }

    pub fn output_shape(&self, index: usize) -> Shape4 {
        self.shapes[index + 1]
    }

    pub fn classes(&self) -> usize {
        self.shapes.last().unwrap().c
    }

    /// Indices of pooling layers in forward order.
    pub fn pool_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Pool { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    /// Total number of pooling regions per example, summed over channels and layers.
    pub fn region_count(&self) -> usize {
        self.pool_layers()
            .iter()
            .map(|&i| self.output_shape(i).item_len())
            .sum()
    }
}
