//! Mini-batch SGD with momentum, weight decay and linear annealing.
//!
//! Update for a parameter `x` with batch-mean gradient `g`:
//!
//! ```text
//! g'  = g + weight_decay * x          (weights only, biases are not decayed)
//! v_t = momentum * v_{t-1} - lr(epoch) * g'
//! x  += v_t
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{NetParams, ParamGroup};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_conv: f64,
    pub lr_softmax: f64,
    /// Fraction of the base rate reached at the final epoch.
    pub final_lr_fraction: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            momentum: 0.9,
            weight_decay: 0.001,
            lr_conv: 1e-2,
            lr_softmax: 1.0,
            final_lr_fraction: 0.01,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr_conv, self.lr_softmax, self.final_lr_fraction];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite())
            || !(self.momentum >= 0.0 && self.momentum < 1.0)
            || !(self.weight_decay >= 0.0)
        {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }

    pub fn base_lr(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Conv => self.lr_conv,
            ParamGroup::Softmax => self.lr_softmax,
        }
    }
}

/// Learning rate at `epoch` of `total_epochs`, falling linearly from `base`
/// at epoch 0 to `base * final_fraction` at the last epoch.
pub fn annealed_lr(base: f64, epoch: usize, total_epochs: usize, final_fraction: f64) -> Result<f64> {
    if epoch >= total_epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} outside a {total_epochs}-epoch schedule"
        )));
    }
    if total_epochs == 1 {
        return Ok(base);
    }
    let t = epoch as f64 / (total_epochs - 1) as f64;
    Ok(base * (1.0 - (1.0 - final_fraction) * t))
}

/// [`annealed_lr`] with the standard 1/100 end point.
pub fn lr_at_epoch(base: f64, epoch: usize, total_epochs: usize) -> Result<f64> {
    annealed_lr(base, epoch, total_epochs, 0.01)
}

/// One momentum update of a single tensor, in place.
pub fn momentum_update(
    velocity: &mut [f64],
    param: &mut [f64],
    grad: &[f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    for ((v, x), g) in velocity.iter_mut().zip(param.iter_mut()).zip(grad) {
        *v = momentum * *v - lr * (g + weight_decay * *x);
        *x += *v;
    }
}

/// Velocities for every parameter tensor plus the schedule they follow.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub config: SgdConfig,
    pub total_epochs: usize,
    pub velocities: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(config: SgdConfig, params: &NetParams, total_epochs: usize) -> Result<Self> {
        config.validate()?;
        if total_epochs == 0 {
            return Err(Error::Config("training needs at least one epoch".into()));
        }
        Ok(SgdState {
            config,
            total_epochs,
            velocities: params.entries().iter().map(|(_, v)| vec![0.0; v.len()]).collect(),
        })
    }

    pub fn lr(&self, group: ParamGroup, epoch: usize) -> Result<f64> {
        annealed_lr(
            self.config.base_lr(group),
            epoch,
            self.total_epochs,
            self.config.final_lr_fraction,
        )
    }

    /// Applies one update to `params` using batch-mean `grads`.
    pub fn step(&mut self, params: &mut NetParams, grads: &NetParams, epoch: usize) -> Result<()> {
        let grad_entries = grads.entries();
        let mut entries = params.entries_mut();
        if entries.len() != grad_entries.len() || entries.len() != self.velocities.len() {
            return Err(Error::dim(
                "momentum_step",
                "parameter, gradient and velocity lists differ in length",
            ));
        }
        for (i, ((info, param), (ginfo, grad))) in entries.iter_mut().zip(&grad_entries).enumerate() {
            if info.shape != ginfo.shape || self.velocities[i].len() != param.len() {
                return Err(Error::dim(
                    "momentum_step",
                    format!("{}: parameter {} vs gradient {}", info.name(), info.shape, ginfo.shape),
                ));
            }
            if let Some(pos) = grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "gradient of {} has non-finite value {} at index {pos} (epoch {epoch})",
                    info.name(),
                    grad[pos]
                )));
            }
            let lr = self.lr(info.group, epoch)?;
            let decay = if info.decays() { self.config.weight_decay } else { 0.0 };
            momentum_update(&mut self.velocities[i], param, grad, lr, self.config.momentum, decay);
        }
        Ok(())
    }
}

/// Free-function form of [`SgdState::step`].
pub fn momentum_step(state: &mut SgdState, params: &mut NetParams, grads: &NetParams, epoch: usize) -> Result<()> {
    state.step(params, grads, epoch)
}
