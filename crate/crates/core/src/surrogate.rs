//! Spike nonlinearity and its surrogate derivative.

use serde::{Deserialize, Serialize};

use crate::neuron::heaviside;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surrogate {
    /// Heaviside forward, boxcar of height 0.5 and half-width 0.5 backward.
    #[default]
    Boxcar,
    /// Smooth `sigmoid(beta * (u - theta))` in both passes. Spikes become
    /// real-valued; only meant for finite-difference gradient checks.
    SoftSigmoid { beta: f64 },
}

#[inline(always)]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Surrogate {
    #[inline(always)]
    pub fn spike(&self, u: f64, theta: f64) -> f64 {
        match *self {
            Surrogate::Boxcar => heaviside(u, theta),
            Surrogate::SoftSigmoid { beta } => sigmoid(beta * (u - theta)),
        }
    }

    #[inline(always)]
    pub fn grad(&self, u: f64, theta: f64) -> f64 {
        match *self {
            Surrogate::Boxcar => {
                if (u - theta).abs() <= 0.5 {
                    0.5
                } else {
                    0.0
                }
            }
            Surrogate::SoftSigmoid { beta } => {
                let s = sigmoid(beta * (u - theta));
                beta * s * (1.0 - s)
            }
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Surrogate::Boxcar)
    }
}

pub fn surrogate_grad(u: f64, theta: f64, mode: Surrogate) -> f64 {
    mode.grad(u, theta)
}
