//! Adam with separate learning rates for weights and delays, and a
//! reduce-on-plateau schedule that scales both rates together.

use crate::error::{ensure_len, Result};
use crate::network::{Network, ParamKind};
use crate::training::backward::Gradients;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam update. `step` counts from 1.
pub fn adam_step(moments: &mut Moments, params: &mut [f64], grads: &[f64], lr: f64, step: u64) -> Result<()> {
    ensure_len("adam parameters", moments.m.len(), params.len())?;
    ensure_len("adam gradients", params.len(), grads.len())?;
    let c1 = 1.0 - ADAM_BETA1.powf(step as f64);
    let c2 = 1.0 - ADAM_BETA2.powf(step as f64);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut moments.m).zip(&mut moments.v) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Reduce-on-plateau on a maximized metric.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

impl Default for PlateauScheduler {
    fn default() -> Self {
        PlateauScheduler {
            factor: 0.7,
            patience: 5,
            best: None,
            bad_epochs: 0,
        }
    }
}

impl PlateauScheduler {
    /// Record a metric; returns the factor to apply to the learning rates
    /// (1 when nothing changes).
    pub fn step(&mut self, metric: f64) -> f64 {
        match self.best {
            Some(b) if metric <= b => self.bad_epochs += 1,
            _ => {
                self.best = Some(metric);
                self.bad_epochs = 0;
            }
        }
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            self.factor
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub moments: Vec<Moments>,
    pub step: u64,
    pub lr_weights: f64,
    pub lr_delays: f64,
    pub scheduler: PlateauScheduler,
    /// Rescale the whole gradient to at most this L2 norm.
    pub grad_clip: Option<f64>,
}

impl OptimizerState {
    pub fn new(net: &Network, lr_weights: f64, lr_delays: f64) -> Self {
        OptimizerState {
            moments: net.tensors().iter().map(|(_, t)| Moments::zeros(t.len())).collect(),
            step: 0,
            lr_weights,
            lr_delays,
            scheduler: PlateauScheduler::default(),
            grad_clip: None,
        }
    }

    /// Adam step on every trainable tensor, then project parameters back
    /// into their bounds.
    pub fn apply(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        ensure_len("optimizer slots", self.moments.len(), grads.values.len())?;
        self.step += 1;
        let scale = match self.grad_clip {
            Some(c) => {
                let n = grads.norm();
                if n > c { c / n } else { 1.0 }
            }
            None => 1.0,
        };
        let trainable: Vec<bool> = grads.ids.iter().map(|&id| net.is_trainable(id)).collect();
        for (slot, (id, params)) in net.tensors_mut().into_iter().enumerate() {
            if !trainable[slot] {
                continue;
            }
            let lr = if id.kind == ParamKind::Delays { self.lr_delays } else { self.lr_weights };
            let g: Vec<f64>;
            let grad = if scale == 1.0 {
                &grads.values[slot][..]
            } else {
                g = grads.values[slot].iter().map(|x| x * scale).collect();
                &g[..]
            };
            adam_step(&mut self.moments[slot], params, grad, lr, self.step)?;
        }
        net.project();
        Ok(())
    }

    /// Feed the epoch's validation metric to the scheduler.
    pub fn scheduler_step(&mut self, metric: f64) -> bool {
        let f = self.scheduler.step(metric);
        self.lr_weights *= f;
        self.lr_delays *= f;
        f != 1.0
    }
}
