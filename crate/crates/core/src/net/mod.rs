//! Network assembly and whole-network forward/backward passes.

mod lrn;
mod params;
mod softmax;
mod spec;

pub use lrn::{lrn_backward, lrn_forward, LrnParams};
pub use params::{LayerParams, NetParams, ParamGroup, ParamInfo};
pub use softmax::{dense_backward, dense_forward, softmax, softmax_xent, DenseParams};
pub use spec::{Layer, LayerSpec, Network, NetworkSpec, PRESETS};

use crate::conv::{conv2d_backward, conv2d_forward};
use crate::error::{Error, Result};
use crate::pooling::{pool_backward, pool_forward, replay_pool_forward, switch_pool_backward, PoolingMode, SwitchMap};
use crate::relu::{relu_backward, relu_forward};
use crate::rng::RngStream;
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Test,
}

/// How one pooling layer produced its output during a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolRecord {
    /// `None` when the layer replayed supplied switches.
    pub mode: Option<PoolingMode>,
    pub switches: Option<SwitchMap>,
    /// Rng stream positions before and after the layer.
    pub stream_span: (u64, u64),
}

/// Everything a forward pass computed, enough to run backward or a
/// top-down reconstruction without recomputation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub phase: Phase,
    /// `activations[i]` is the input of layer `i`; the last entry holds the
    /// softmax probabilities `(n, classes, 1, 1)`.
    pub activations: Vec<Tensor4>,
    pub logits: Tensor4,
    /// One entry per layer, `Some` for pooling layers.
    pub pools: Vec<Option<PoolRecord>>,
    fingerprint: u64,
}

impl ForwardTrace {
    pub fn probabilities(&self) -> &Tensor4 {
        self.activations.last().expect("trace has at least the input")
    }

    pub fn input(&self) -> &Tensor4 {
        &self.activations[0]
    }

    /// Switch maps per layer, `None` for non-selecting layers.
    pub fn switches(&self) -> Vec<Option<SwitchMap>> {
        self.pools
            .iter()
            .map(|p| p.as_ref().and_then(|r| r.switches.clone()))
            .collect()
    }

    /// Predicted class per batch element (lowest index wins ties).
    pub fn predictions(&self) -> Vec<usize> {
        argmax_rows(self.probabilities())
    }
}

pub fn argmax_rows(probs: &Tensor4) -> Vec<usize> {
    (0..probs.shape().n)
        .map(|n| {
            let row = probs.item(n);
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Options for [`network_forward_with`].
#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions<'a> {
    pub phase: Phase,
    /// Use this mode for every pooling layer instead of the configured one.
    pub pool_override: Option<PoolingMode>,
    /// Per-layer switch maps to replay instead of pooling; layers with
    /// `None` pool normally.
    pub replay: Option<&'a [Option<SwitchMap>]>,
}

impl ForwardOptions<'_> {
    pub fn phase(phase: Phase) -> Self {
        ForwardOptions {
            phase,
            pool_override: None,
            replay: None,
        }
    }
}

/// Forward pass where pooling layers use their train or test mode per `phase`.
pub fn network_forward(
    net: &Network,
    params: &NetParams,
    batch: &Tensor4,
    phase: Phase,
    stream: &mut RngStream,
) -> Result<ForwardTrace> {
    network_forward_with(net, params, batch, ForwardOptions::phase(phase), stream)
}

pub fn network_forward_with(
    net: &Network,
    params: &NetParams,
    batch: &Tensor4,
    options: ForwardOptions<'_>,
    stream: &mut RngStream,
) -> Result<ForwardTrace> {
    params.check(net)?;
    let expected = net.input_shape(0).with_batch(batch.shape().n);
    batch.expect_shape("network_forward", expected)?;
    if let Some(r) = options.replay {
        if r.len() != net.layers().len() {
            return Err(Error::Switch(format!(
                "{} replay entries for {} layers",
                r.len(),
                net.layers().len()
            )));
        }
    }
    let mut activations = Vec::with_capacity(net.layers().len() + 1);
    activations.push(batch.clone());
    let mut pools = Vec::with_capacity(net.layers().len());
    let mut logits = None;
    for (i, (layer, lp)) in net.layers().iter().zip(&params.layers).enumerate() {
        let x = activations.last().unwrap();
        let mut record = None;
        let y = match (layer, lp) {
            (Layer::Conv { .. }, LayerParams::Conv(p)) => conv2d_forward(x, p)?,
            (Layer::Relu, _) => relu_forward(x),
            (Layer::ResponseNorm(p), _) => lrn_forward(x, p)?,
            (Layer::Pool { geometry, train, test }, _) => {
                let before = stream.position();
                let replay = options.replay.and_then(|r| r[i].as_ref());
                if let Some(sw) = replay {
                    let y = replay_pool_forward(x, sw)?;
                    record = Some(PoolRecord {
                        mode: None,
                        switches: Some(sw.clone()),
                        stream_span: (before, before),
                    });
                    y
                } else {
                    let mode = options.pool_override.unwrap_or(match options.phase {
                        Phase::Train => *train,
                        Phase::Test => *test,
                    });
                    let pooled = pool_forward(x, geometry, mode, stream)?;
                    record = Some(PoolRecord {
                        mode: Some(mode),
                        switches: pooled.switches,
                        stream_span: (before, stream.position()),
                    });
                    pooled.output
                }
            }
            (Layer::Softmax { .. }, LayerParams::Dense(p)) => {
                let z = dense_forward(x, p)?;
                let probs = softmax(&z);
                logits = Some(z);
                probs
            }
            _ => unreachable!("params were checked against the network"),
        };
        if !y.all_finite() {
            return Err(Error::Numerical(format!(
                "non-finite activations after layer {i} ({})",
                layer.kind()
            )));
        }
        pools.push(record);
        activations.push(y);
    }
    Ok(ForwardTrace {
        phase: options.phase,
        activations,
        logits: logits.expect("networks end in softmax"),
        pools,
        fingerprint: net.spec().fingerprint(),
    })
}

/// Loss and parameter gradients for one traced batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub params: NetParams,
    /// Gradient with respect to the network input.
    pub input: Tensor4,
}

/// Backpropagates the mean cross-entropy of `labels` through a trace.
/// Selecting pooling layers route gradients through the trace's switches.
pub fn network_backward(
    net: &Network,
    params: &NetParams,
    trace: &ForwardTrace,
    labels: &[usize],
) -> Result<Gradients> {
    params.check(net)?;
    if trace.fingerprint != net.spec().fingerprint()
        || trace.activations.len() != net.layers().len() + 1
    {
        return Err(Error::InvalidArgument(
            "trace was produced by a different network".into(),
        ));
    }
    let (loss, mut grad) = softmax_xent(&trace.logits, labels)?;
    let mut grads = params.zeros_like();
    for (i, layer) in net.layers().iter().enumerate().rev() {
        let x = &trace.activations[i];
        grad = match (layer, &params.layers[i]) {
            (Layer::Softmax { .. }, LayerParams::Dense(p)) => {
                let (gx, gp) = dense_backward(x, p, &grad)?;
                grads.layers[i] = LayerParams::Dense(gp);
                gx
            }
            (Layer::Conv { .. }, LayerParams::Conv(p)) => {
                let g = conv2d_backward(x, p, &grad)?;
                grads.layers[i] = LayerParams::Conv(crate::conv::ConvParams {
                    filters: g.filters,
                    bias: g.bias,
                    geometry: p.geometry,
                });
                g.input
            }
            (Layer::Relu, _) => relu_backward(x, &grad)?,
            (Layer::ResponseNorm(p), _) => lrn_backward(x, &grad, p)?,
            (Layer::Pool { geometry, .. }, _) => {
                let record = trace.pools[i]
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument(format!("trace has no record for pool layer {i}")))?;
                match record.mode {
                    Some(mode) => pool_backward(x, geometry, mode, record.switches.as_ref(), &grad)?,
                    None => {
                        let sw = record.switches.as_ref().expect("replayed layers keep their switches");
                        switch_pool_backward(&grad, sw, geometry)?
                    }
                }
            }
            _ => unreachable!("params were checked against the network"),
        };
    }
    Ok(Gradients {
        loss,
        params: grads,
        input: grad,
    })
}

/// Class probabilities with every pooling layer in `mode`.
///
/// `StochasticN(k)` averages the softmax outputs of `k` independent
/// stochastic passes; other modes run a single pass.
pub fn predict(
    net: &Network,
    params: &NetParams,
    batch: &Tensor4,
    mode: Option<PoolingMode>,
    stream: &mut RngStream,
) -> Result<Tensor4> {
    match mode {
        Some(PoolingMode::StochasticN(k)) => predict_stochastic_n(net, params, batch, k, stream),
        _ => {
            let options = ForwardOptions {
                phase: Phase::Test,
                pool_override: mode,
                replay: None,
            };
            Ok(network_forward_with(net, params, batch, options, stream)?
                .probabilities()
                .clone())
        }
    }
}

/// Mean softmax output of `n` forward passes with freshly sampled
/// stochastic pooling at every layer.
pub fn predict_stochastic_n(
    net: &Network,
    params: &NetParams,
    batch: &Tensor4,
    n: u32,
    stream: &mut RngStream,
) -> Result<Tensor4> {
    if n == 0 {
        return Err(Error::InvalidArgument("stochastic-N needs n >= 1".into()));
    }
    let options = ForwardOptions {
        phase: Phase::Test,
        pool_override: Some(PoolingMode::Stochastic),
        replay: None,
    };
    let mut mean: Option<Tensor4> = None;
    for _ in 0..n {
        let trace = network_forward_with(net, params, batch, options, stream)?;
        match mean.as_mut() {
            None => mean = Some(trace.probabilities().clone()),
            Some(m) => m.add_scaled(trace.probabilities(), 1.0)?,
        }
    }
    Ok(mean.unwrap().scale(1.0 / n as f64))
}
