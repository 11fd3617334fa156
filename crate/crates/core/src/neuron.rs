//! Adaptive leaky integrate-and-fire neurons (AdLIF+).
//!
//! Discrete-time recurrence, evaluated per neuron:
//!
//! ```text
//! u[t] = alpha * u[t-1] + (1 - alpha) * (I[t] - w[t-1]) - theta * s[t-1]
//! w[t] = beta  * w[t-1] + (1 - beta) * a * u[t-1]       + b * s[t-1]
//! s[t] = u[t] >= theta
//! ```
//!
//! Both state updates read only `t-1` quantities. Reset is soft: the only
//! reset is the `-theta * s[t-1]` term. With `a = b = 0` and `w` starting at
//! zero the adaptation current stays zero and the model is a plain LIF.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::seed;

pub const DEFAULT_THRESHOLD: f64 = 1.0;

/// Firing threshold. Fixed, shared by every neuron, never trained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold(pub f64);

impl Default for Threshold {
    fn default() -> Self {
        Threshold(DEFAULT_THRESHOLD)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Initialization and clipping ranges of the four neuron parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronBounds {
    pub alpha: Interval,
    pub beta: Interval,
    pub a: Interval,
    pub b: Interval,
}

impl NeuronBounds {
    /// AdLIF+ ranges: positive coupling `a`, widened membrane leak `alpha`.
    pub const ADLIF_PLUS: NeuronBounds = NeuronBounds {
        alpha: Interval::new(0.36, 0.96),
        beta: Interval::new(0.96, 0.99),
        a: Interval::new(0.0, 1.0),
        b: Interval::new(0.0, 2.0),
    };
}

impl Default for NeuronBounds {
    fn default() -> Self {
        NeuronBounds::ADLIF_PLUS
    }
}

/// Per-neuron trainable parameters of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl NeuronParams {
    /// Uniform draw inside the AdLIF+ bounds.
    pub fn init(num_neurons: usize, rng_seed: u64) -> Result<Self> {
        Self::init_with(num_neurons, &NeuronBounds::ADLIF_PLUS, &mut seed::rng(rng_seed))
    }

    pub fn init_with(num_neurons: usize, bounds: &NeuronBounds, rng: &mut seed::Rng) -> Result<Self> {
        if num_neurons == 0 {
            return Err(Error::InvalidArgument("layer must have at least one neuron".into()));
        }
        let mut draw = |iv: &Interval| -> Vec<f64> {
            (0..num_neurons)
                .map(|_| if iv.hi > iv.lo { rng.gen_range(iv.lo..iv.hi) } else { iv.lo })
                .collect()
        };
        Ok(NeuronParams {
            alpha: draw(&bounds.alpha),
            beta: draw(&bounds.beta),
            a: draw(&bounds.a),
            b: draw(&bounds.b),
        })
    }

    /// Plain LIF layer: adaptation switched off.
    pub fn lif(alpha: Vec<f64>) -> Self {
        let n = alpha.len();
        NeuronParams {
            alpha,
            beta: vec![NeuronBounds::ADLIF_PLUS.beta.lo; n],
            a: vec![0.0; n],
            b: vec![0.0; n],
        }
    }

    pub fn uniform(num_neurons: usize, alpha: f64, beta: f64, a: f64, b: f64) -> Self {
        NeuronParams {
            alpha: vec![alpha; num_neurons],
            beta: vec![beta; num_neurons],
            a: vec![a; num_neurons],
            b: vec![b; num_neurons],
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.alpha.len();
        ensure_len("neuron beta", n, self.beta.len())?;
        ensure_len("neuron a", n, self.a.len())?;
        ensure_len("neuron b", n, self.b.len())
    }

    pub fn clip(&mut self, bounds: &NeuronBounds) {
        for x in &mut self.alpha {
            *x = bounds.alpha.clamp(*x);
        }
        for x in &mut self.beta {
            *x = bounds.beta.clamp(*x);
        }
        for x in &mut self.a {
            *x = bounds.a.clamp(*x);
        }
        for x in &mut self.b {
            *x = bounds.b.clamp(*x);
        }
    }

    pub fn clipped(mut self, bounds: &NeuronBounds) -> Self {
        self.clip(bounds);
        self
    }

    pub fn within(&self, bounds: &NeuronBounds) -> bool {
        self.alpha.iter().all(|&x| bounds.alpha.contains(x))
            && self.beta.iter().all(|&x| bounds.beta.contains(x))
            && self.a.iter().all(|&x| bounds.a.contains(x))
            && self.b.iter().all(|&x| bounds.b.contains(x))
    }
}

/// Clamp every parameter into the AdLIF+ bounds.
pub fn clip_params(params: NeuronParams) -> NeuronParams {
    params.clipped(&NeuronBounds::ADLIF_PLUS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateInit {
    /// `u, w ~ U[0, 1]`, `s = 0`.
    #[default]
    RandomUniform,
    Zeros,
}

/// Dynamic state of one layer at a single timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    /// Spike emitted at the previous step (0 or 1).
    pub s: Vec<f64>,
}

impl LayerState {
    pub fn zeros(num_neurons: usize) -> Self {
        LayerState {
            u: vec![0.0; num_neurons],
            w: vec![0.0; num_neurons],
            s: vec![0.0; num_neurons],
        }
    }

    pub fn init(num_neurons: usize, rng_seed: u64, mode: StateInit) -> Result<Self> {
        Self::init_with(num_neurons, &mut seed::rng(rng_seed), mode)
    }

    pub fn init_with(num_neurons: usize, rng: &mut seed::Rng, mode: StateInit) -> Result<Self> {
        if num_neurons == 0 {
            return Err(Error::InvalidArgument("layer must have at least one neuron".into()));
        }
        let mut state = LayerState::zeros(num_neurons);
        if mode == StateInit::RandomUniform {
            for x in &mut state.u {
                *x = rng.gen::<f64>();
            }
            for x in &mut state.w {
                *x = rng.gen::<f64>();
            }
        }
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Spikes emitted at the most recent step.
    pub fn spikes(&self) -> &[f64] {
        &self.s
    }
}

/// Subthreshold part of one step for a single neuron. Returns `(u[t], w[t])`.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
pub(crate) fn membrane_update(
    u_prev: f64,
    w_prev: f64,
    s_prev: f64,
    alpha: f64,
    beta: f64,
    a: f64,
    b: f64,
    current: f64,
    theta: f64,
) -> (f64, f64) {
    let u = alpha * u_prev + (1.0 - alpha) * (current - w_prev) - theta * s_prev;
    let w = beta * w_prev + (1.0 - beta) * a * u_prev + b * s_prev;
    (u, w)
}

#[inline(always)]
pub(crate) fn heaviside(u: f64, theta: f64) -> f64 {
    if u >= theta {
        1.0
    } else {
        0.0
    }
}

/// Advance a layer by one timestep. The returned state's `s` holds the
/// spikes emitted at this step.
pub fn adlif_step(
    state: &LayerState,
    params: &NeuronParams,
    input_current: &[f64],
    theta: Threshold,
) -> Result<LayerState> {
    let n = state.len();
    params.validate()?;
    ensure_len("neuron parameters", n, params.len())?;
    ensure_len("adaptation state", n, state.w.len())?;
    ensure_len("spike state", n, state.s.len())?;
    ensure_len("input current", n, input_current.len())?;
    if let Some(i) = input_current.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            stage: "input current",
            layer: 0,
            timestep: 0,
            index: i,
        });
    }
    if state.s.iter().any(|&s| s != 0.0 && s != 1.0) {
        return Err(Error::InvalidArgument("spike state must be binary".into()));
    }

    let mut next = LayerState::zeros(n);
    for i in 0..n {
        let (u, w) = membrane_update(
            state.u[i],
            state.w[i],
            state.s[i],
            params.alpha[i],
            params.beta[i],
            params.a[i],
            params.b[i],
            input_current[i],
            theta.0,
        );
        next.u[i] = u;
        next.w[i] = w;
        next.s[i] = heaviside(u, theta.0);
    }
    Ok(next)
}
