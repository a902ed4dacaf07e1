//! SGD with momentum and coupled L2 weight decay, and per-epoch learning
//! rate schedules.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};
use crate::layers::Param;

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.0005;

#[derive(Clone, Debug)]
pub struct Sgd {
    lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if lr.is_nan() || lr <= 0.0 {
            return Err(param_err!("learning rate must be positive, got {lr}"));
        }
        if !(0.0..1.0).contains(&momentum) || weight_decay < 0.0 {
            return Err(param_err!(
                "momentum {momentum} must lie in [0, 1), weight decay {weight_decay} >= 0"
            ));
        }
        Ok(Sgd {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) -> Result<()> {
        if lr.is_nan() || lr <= 0.0 {
            return Err(param_err!("learning rate must be positive, got {lr}"));
        }
        self.lr = lr;
        Ok(())
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// `v = momentum*v + grad + wd*param; param -= lr*v`.
    ///
    /// Params with `decay == false` (BN gamma/beta) skip the decay term.
    /// Velocity buffers are created on the first step.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        if self.velocity.len() != params.len() {
            return Err(shape_err!(
                "optimizer tracks {} params, got {}",
                self.velocity.len(),
                params.len()
            ));
        }
        for (p, v) in params.iter_mut().zip(&mut self.velocity) {
            if p.value.len() != v.len() || p.grad.len() != v.len() {
                return Err(shape_err!("param {} changed shape", p.name));
            }
            let wd = if p.decay { self.weight_decay } else { 0.0 };
            for ((w, g), vel) in p.value.iter_mut().zip(&p.grad).zip(v.iter_mut()) {
                *vel = self.momentum * *vel + g + wd * *w;
                *w -= self.lr * *vel;
            }
        }
        Ok(())
    }
}

/// Learning rate as a function of the epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LrSchedule {
    Step {
        base_lr: f64,
        milestones: Vec<usize>,
        factor: f64,
    },
    Cosine {
        base_lr: f64,
        lr_min: f64,
        total_epochs: usize,
    },
}

impl LrSchedule {
    /// 0.1, times 0.2 at epochs 60, 120 and 160 (200-epoch CIFAR recipe).
    pub fn cifar() -> Self {
        LrSchedule::Step {
            base_lr: 0.1,
            milestones: vec![60, 120, 160],
            factor: 0.2,
        }
    }

    /// 0.1, times 0.1 at epochs 30, 60, 85, 95 and 105 (110-epoch ImageNet recipe).
    pub fn imagenet() -> Self {
        LrSchedule::Step {
            base_lr: 0.1,
            milestones: vec![30, 60, 85, 95, 105],
            factor: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LrSchedule::Step {
                base_lr,
                milestones,
                factor,
            } => {
                if base_lr.is_nan() || *base_lr <= 0.0 {
                    return Err(param_err!("base_lr must be positive"));
                }
                if !(*factor > 0.0 && *factor < 1.0) {
                    return Err(param_err!("step factor {factor} outside (0, 1)"));
                }
                if milestones.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(param_err!("milestones {milestones:?} not strictly increasing"));
                }
            }
            LrSchedule::Cosine {
                base_lr,
                lr_min,
                total_epochs,
            } => {
                if base_lr.is_nan() || *base_lr <= 0.0 || *lr_min < 0.0 || lr_min > base_lr {
                    return Err(param_err!("cosine needs 0 <= lr_min <= base_lr, base_lr > 0"));
                }
                if *total_epochs == 0 {
                    return Err(param_err!("cosine schedule needs total_epochs > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn base_lr(&self) -> f64 {
        match self {
            LrSchedule::Step { base_lr, .. } | LrSchedule::Cosine { base_lr, .. } => *base_lr,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        match self {
            LrSchedule::Step {
                base_lr,
                milestones,
                factor,
            } => Ok(step_lr(*base_lr, milestones, *factor, epoch)),
            LrSchedule::Cosine {
                base_lr,
                lr_min,
                total_epochs,
            } => cosine_lr(*base_lr, *lr_min, epoch, *total_epochs),
        }
    }
}

/// `base_lr * factor^(milestones <= epoch)`.
///
/// When `1/factor` is an integer (0.2, 0.1, ...) the rate is computed by
/// dividing by that integer, which lands on the nearest double to the
/// decimal value (0.1 * 0.2 would give 0.020000000000000004).
pub fn step_lr(base_lr: f64, milestones: &[usize], factor: f64, epoch: usize) -> f64 {
    let k = milestones.iter().filter(|&&m| m <= epoch).count() as i32;
    if k == 0 {
        return base_lr;
    }
    let inv = (1.0 / factor).round();
    if (inv * factor - 1.0).abs() < 1e-12 {
        base_lr / inv.powi(k)
    } else {
        base_lr * factor.powi(k)
    }
}

/// `lr_min + (base_lr - lr_min) * (1 + cos(pi * epoch / total)) / 2`.
pub fn cosine_lr(base_lr: f64, lr_min: f64, epoch: usize, total_epochs: usize) -> Result<f64> {
    if total_epochs == 0 {
        return Err(param_err!("cosine schedule needs total_epochs > 0"));
    }
    if epoch > total_epochs {
        return Err(param_err!("epoch {epoch} beyond total {total_epochs}"));
    }
    if epoch == 0 {
        return Ok(base_lr);
    }
    let t = std::f64::consts::PI * epoch as f64 / total_epochs as f64;
    Ok(lr_min + 0.5 * (base_lr - lr_min) * (1.0 + t.cos()))
}
