//! Adam with bias correction and a reduce-on-plateau learning-rate schedule.

use super::tensor::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: ParamSet,
    second_moment: ParamSet,
}

impl Adam {
    pub fn new(params: &ParamSet, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: ParamSet::zeros_like(params),
            second_moment: ParamSet::zeros_like(params),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        if !params.same_layout(grads) || !params.same_layout(&self.first_moment) {
            return Err(Error::shape(
                "gradients shaped like parameters",
                "mismatched parameter layout",
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.first_moment.tensors)
            .zip(&mut self.second_moment.tensors)
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without a relative improvement larger than `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub learning_rate: f64,
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    best: f64,
    stale_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            factor: 0.1,
            patience: 3,
            threshold: 1e-4,
            best: f64::INFINITY,
            stale_epochs: 0,
        }
    }

    /// Records one epoch's validation loss and returns the learning rate to
    /// use next.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best * (1.0 - self.threshold) {
            self.best = val_loss;
            self.stale_epochs = 0;
        } else {
            self.stale_epochs += 1;
            if self.stale_epochs >= self.patience {
                self.learning_rate *= self.factor;
                self.stale_epochs = 0;
            }
        }
        self.learning_rate
    }
}

/// Replays a validation-loss history through a fresh scheduler.
pub fn plateau_schedule(history: &[f64], initial_lr: f64) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::arg("history", "need at least one epoch"));
    }
    let mut s = PlateauScheduler::new(initial_lr);
    let mut lr = initial_lr;
    for &l in history {
        lr = s.observe(l);
    }
    Ok(lr)
}
