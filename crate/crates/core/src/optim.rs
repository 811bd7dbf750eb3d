//! SGD with heavy-ball momentum, coupled weight decay, and a step schedule.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A trainable tensor plus its momentum buffer.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub tensor: Tensor,
    momentum: Vec<f64>,
}

impl Parameter {
    /// Wraps a tensor that requires gradients.
    pub fn new(tensor: Tensor) -> Result<Self> {
        if !tensor.requires_grad() {
            return Err(Error::Contract(
                "optimizer parameter must require gradients".into(),
            ));
        }
        let momentum = vec![0.0; tensor.len()];
        Ok(Self { tensor, momentum })
    }

    pub fn momentum(&self) -> &[f64] {
        &self.momentum
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Fractions of the total iteration count at which the rate is decayed.
    pub decay_milestones: Vec<f64>,
    pub decay_factor: f64,
}

impl Default for OptimizerConfig {
    /// lr 0.1, momentum 0.9, weight decay 1e-4, decayed by 0.1 at 50% and 75%.
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            decay_milestones: vec![0.5, 0.75],
            decay_factor: 0.1,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Contract(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Contract(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Contract(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return Err(Error::Contract(format!(
                "decay factor must be positive, got {}",
                self.decay_factor
            )));
        }
        let mut prev = 0.0;
        for &m in &self.decay_milestones {
            if !(m > prev && m < 1.0) {
                return Err(Error::Contract(format!(
                    "decay milestones must be strictly increasing inside (0, 1), got {:?}",
                    self.decay_milestones
                )));
            }
            prev = m;
        }
        Ok(())
    }

    /// Learning rate in effect at `iteration` (0-based) out of `total`.
    ///
    /// The rate is multiplied by `decay_factor` once for every milestone
    /// fraction `f` with `iteration >= f * total`.
    pub fn learning_rate_at(&self, iteration: usize, total: usize) -> f64 {
        let passed = self
            .decay_milestones
            .iter()
            .filter(|&&f| iteration as f64 >= f * total as f64)
            .count();
        let mut lr = self.learning_rate;
        for _ in 0..passed {
            lr *= self.decay_factor;
        }
        lr
    }
}

/// One update of every parameter, then clears the gradients.
///
/// `v ← μ·v + (g + λ·p)` and `p ← p − lr·v`. Fails before touching anything if
/// a parameter has no gradient.
pub fn sgd_step(
    params: &mut [Parameter],
    cfg: &OptimizerConfig,
    iteration: usize,
    total_iterations: usize,
) -> Result<()> {
    if let Some(i) = params.iter().position(|p| p.tensor.grad().is_none()) {
        return Err(Error::Contract(format!(
            "parameter {i} has no gradient; run backward before stepping"
        )));
    }
    let lr = cfg.learning_rate_at(iteration, total_iterations);
    for p in params.iter_mut() {
        let momentum = &mut p.momentum;
        p.tensor.with_values_and_grad(|values, grad| {
            let grad = grad.expect("checked above");
            for ((w, v), g) in values.iter_mut().zip(momentum.iter_mut()).zip(grad) {
                *v = cfg.momentum * *v + (g + cfg.weight_decay * *w);
                *w -= lr * *v;
            }
        });
        p.tensor.zero_grad();
    }
    Ok(())
}
