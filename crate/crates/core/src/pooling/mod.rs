//! Pooling over rectified feature maps.
//!
//! Besides the usual average and max pooling this module provides
//! stochastic pooling, where each region outputs one of its activations
//! drawn with probability proportional to its value, and probabilistic
//! weighting, the closed-form expectation of that draw used at test time.
//! Every selecting mode records a [`SwitchMap`] that later routes gradients
//! and drives unpooling.

mod geometry;
mod kernels;
mod switches;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use geometry::{enumerate_regions, PoolingGeometry, Region};
pub use kernels::{
    avg_pool_backward, avg_pool_forward, max_pool_forward, prob_weight_backward,
    prob_weight_forward, region_probabilities, replay_pool_forward, stochastic_pool_forward,
    switch_pool_backward, uniform_switches, RegionDistribution,
};
pub(crate) use kernels::place_at_switches;
pub use switches::{SwitchMap, SPSW_MAGIC};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor4;

/// How a pooling layer reduces its regions.
///
/// `StochasticN` behaves exactly like `Stochastic` inside a layer; the
/// network evaluates it by averaging the softmax outputs of `count`
/// independent stochastic passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolingMode {
    Average,
    Max,
    Stochastic,
    ProbWeight,
    StochasticN(u32),
}

impl PoolingMode {
    pub fn validate(self) -> Result<Self> {
        match self {
            PoolingMode::StochasticN(0) => Err(Error::InvalidArgument(
                "stochastic-N needs at least one sample".into(),
            )),
            m => Ok(m),
        }
    }

    /// Whether a forward pass in this mode draws from the rng.
    pub fn is_random(self) -> bool {
        matches!(self, PoolingMode::Stochastic | PoolingMode::StochasticN(_))
    }

    /// Number of whole-network passes averaged at prediction time.
    pub fn passes(self) -> u32 {
        match self {
            PoolingMode::StochasticN(n) => n,
            _ => 1,
        }
    }
}

impl fmt::Display for PoolingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoolingMode::Average => f.write_str("avg"),
            PoolingMode::Max => f.write_str("max"),
            PoolingMode::Stochastic => f.write_str("stochastic"),
            PoolingMode::ProbWeight => f.write_str("probweight"),
            PoolingMode::StochasticN(n) => write!(f, "stochastic-{n}"),
        }
    }
}

impl FromStr for PoolingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let mode = match lower.as_str() {
            "avg" | "average" => PoolingMode::Average,
            "max" => PoolingMode::Max,
            "stochastic" | "sto" => PoolingMode::Stochastic,
            "probweight" | "prob" | "prob-weight" | "probability-weighting" => PoolingMode::ProbWeight,
            other => match other.strip_prefix("stochastic-") {
                Some(n) => PoolingMode::StochasticN(
                    n.parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad pooling mode {s:?}")))?,
                ),
                None => return Err(Error::InvalidArgument(format!("unknown pooling mode {s:?}"))),
            },
        };
        mode.validate()
    }
}

impl Serialize for PoolingMode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PoolingMode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Pooled output of one layer plus the switches it selected, if the mode selects.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub output: Tensor4,
    pub switches: Option<SwitchMap>,
}

/// Forward pass in `mode`. Only random modes touch `stream`.
pub fn pool_forward(
    input: &Tensor4,
    geometry: &PoolingGeometry,
    mode: PoolingMode,
    stream: &mut RngStream,
) -> Result<Pooled> {
    Ok(match mode.validate()? {
        PoolingMode::Average => Pooled {
            output: avg_pool_forward(input, geometry)?,
            switches: None,
        },
        PoolingMode::ProbWeight => Pooled {
            output: prob_weight_forward(input, geometry)?,
            switches: None,
        },
        PoolingMode::Max => {
            let (output, sw) = max_pool_forward(input, geometry)?;
            Pooled {
                output,
                switches: Some(sw),
            }
        }
        PoolingMode::Stochastic | PoolingMode::StochasticN(_) => {
            let (output, sw) = stochastic_pool_forward(input, geometry, stream)?;
            Pooled {
                output,
                switches: Some(sw),
            }
        }
    })
}

/// Backward pass matching [`pool_forward`] in `mode`.
pub fn pool_backward(
    input: &Tensor4,
    geometry: &PoolingGeometry,
    mode: PoolingMode,
    switches: Option<&SwitchMap>,
    grad_output: &Tensor4,
) -> Result<Tensor4> {
    match mode {
        PoolingMode::Average => avg_pool_backward(grad_output, geometry),
        PoolingMode::ProbWeight => prob_weight_backward(input, geometry, grad_output),
        PoolingMode::Max | PoolingMode::Stochastic | PoolingMode::StochasticN(_) => {
            let sw = switches.ok_or_else(|| {
                Error::Switch(format!("{mode} pooling backward needs the forward switches"))
            })?;
            switch_pool_backward(grad_output, sw, geometry)
        }
    }
}

/// Number of distinct networks selectable by pooling `regions` regions of
/// `region_size` cells each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelCount {
    Exact(u128),
    /// `log10` of a count too large for `u128`.
    Log10(f64),
}

impl ModelCount {
    pub fn log10(&self) -> f64 {
        match *self {
            ModelCount::Exact(v) => (v as f64).log10(),
            ModelCount::Log10(l) => l,
        }
    }
}

pub fn model_count(region_size: u64, regions: u64) -> Result<ModelCount> {
    if region_size == 0 {
        return Err(Error::InvalidArgument("region size must be at least 1".into()));
    }
    let exact = u32::try_from(regions)
        .ok()
        .and_then(|d| (region_size as u128).checked_pow(d));
    Ok(match exact {
        Some(v) => ModelCount::Exact(v),
        None => ModelCount::Log10(regions as f64 * (region_size as f64).log10()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in [
            PoolingMode::Average,
            PoolingMode::Max,
            PoolingMode::Stochastic,
            PoolingMode::ProbWeight,
            PoolingMode::StochasticN(10),
        ] {
            assert_eq!(m.to_string().parse::<PoolingMode>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<PoolingMode>(&json).unwrap(), m);
        }
        assert!("stochastic-0".parse::<PoolingMode>().is_err());
        assert!("median".parse::<PoolingMode>().is_err());
    }

    #[test]
    fn model_counts() {
        assert_eq!(model_count(9, 3).unwrap(), ModelCount::Exact(729));
        assert_eq!(model_count(2, 1).unwrap(), ModelCount::Exact(2));
        assert_eq!(model_count(7, 0).unwrap(), ModelCount::Exact(1));
        match model_count(9, 10_000).unwrap() {
            ModelCount::Log10(l) => assert!((l - 10_000.0 * 9f64.log10()).abs() < 1e-9),
            other => panic!("expected log form, got {other:?}"),
        }
        assert!(model_count(0, 3).is_err());
    }

    #[test]
    fn backward_without_switches_is_an_error() {
        let g = PoolingGeometry::square(2, 2, (2, 2)).unwrap();
        let x = Tensor4::zeros(crate::tensor::Shape4::new(1, 1, 2, 2));
        let go = Tensor4::zeros(crate::tensor::Shape4::new(1, 1, 1, 1));
        assert!(pool_backward(&x, &g, PoolingMode::Max, None, &go).is_err());
    }
}
