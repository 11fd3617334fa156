//! Finite-difference check of the analytic gradients on small random
//! networks with a smooth spike function.

use rand::Rng as _;

use crate::data::SpikeTensor;
use crate::error::Result;
use crate::network::{network_forward, Mode, Network, NetworkConfig, ParamKind};
use crate::neuron::StateInit;
use crate::seed::{self, stream};
use crate::surrogate::Surrogate;
use crate::training::{backward, loss, BackwardOptions};

/// Central difference stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(L(x+e) - L(x-e)) / 2e`, truncation error `O(e^2)`.
    TwoPoint,
    /// `(-L(x+2e) + 8L(x+e) - 8L(x-e) + L(x-2e)) / 12e`, truncation error `O(e^4)`.
    #[default]
    FourPoint,
}

impl std::str::FromStr for Stencil {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2" | "two" => Ok(Stencil::TwoPoint),
            "4" | "four" => Ok(Stencil::FourPoint),
            _ => Err(crate::error::Error::InvalidArgument(format!("unknown stencil {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub input_channels: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub timesteps: usize,
    pub batch: usize,
    pub max_delay: usize,
    pub epsilon: f64,
    pub stencil: Stencil,
    pub tolerance: f64,
    /// Steepness of the smooth spike function.
    pub soft_beta: f64,
    /// Multiplier on the Xavier-initialized weights.
    pub weight_scale: f64,
    /// One-sided differences at integer delays use this tolerance.
    pub integer_tolerance: f64,
    pub check_integer_delays: bool,
    #[doc(hidden)]
    pub corrupt: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            seed: 0,
            input_channels: 8,
            hidden: vec![8, 8],
            classes: 4,
            timesteps: 20,
            batch: 2,
            max_delay: 5,
            epsilon: 1e-4,
            stencil: Stencil::FourPoint,
            tolerance: 1e-5,
            soft_beta: 3.0,
            weight_scale: 2.0,
            integer_tolerance: 1e-3,
            check_integer_delays: true,
            corrupt: false,
        }
    }
}

/// Worst entry of one parameter class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    /// `(layer, index, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub tolerance: f64,
}

impl ClassReport {
    fn new(name: &str, tolerance: f64) -> Self {
        ClassReport {
            name: name.to_string(),
            checked: 0,
            max_rel_err: 0.0,
            worst: None,
            tolerance,
        }
    }

    fn record(&mut self, layer: usize, index: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if self.worst.is_none() || err > self.max_rel_err {
            self.max_rel_err = err;
            self.worst = Some((layer, index, analytic, numeric));
        }
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub seed: u64,
    /// One entry per parameter class, then optionally `delays_integer`.
    pub classes: Vec<ClassReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.classes.iter().all(ClassReport::passed)
    }

    pub fn class(&self, name: &str) -> Option<&ClassReport> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = format!("gradcheck seed {}\n", self.seed);
        for c in &self.classes {
            out.push_str(&format!(
                "{:<15} checked {:>5}  max rel err {:.3e}  tol {:.0e}  {}",
                c.name,
                c.checked,
                c.max_rel_err,
                c.tolerance,
                if c.passed() { "ok" } else { "FAIL" }
            ));
            if let (false, Some((l, i, a, n))) = (c.passed(), c.worst) {
                out.push_str(&format!("  at layer {l} index {i}: analytic {a:.9e} numeric {n:.9e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Denominator floor of the relative error. Loss differences carry about
/// 1e-15 of rounding noise, about 1e-11 after division by the step, so smaller
/// gradient entries are compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Random network, inputs and labels for a check.
pub fn build_problem(cfg: &GradcheckConfig) -> Result<(Network, SpikeTensor, Vec<usize>)> {
    let net_cfg = NetworkConfig {
        input_channels: cfg.input_channels,
        hidden: cfg.hidden.clone(),
        classes: cfg.classes,
        dropout: 0.0,
        max_delay: cfg.max_delay,
        surrogate: Surrogate::SoftSigmoid { beta: cfg.soft_beta },
        state_init: StateInit::RandomUniform,
        ..NetworkConfig::default()
    };
    let mut net = Network::new(net_cfg, cfg.seed)?;
    let mut rng = seed::stream_rng(cfg.seed, stream::INIT, 1, 0);
    for syn in &mut net.synapses {
        for w in &mut syn.weights {
            *w *= cfg.weight_scale;
        }
        for b in &mut syn.bias {
            *b = rng.gen_range(-0.2..0.2);
        }
        for d in &mut syn.delays.d {
            let k = rng.gen_range(0..cfg.max_delay.max(1)) as f64;
            let f = if cfg.max_delay == 0 { 0.0 } else { rng.gen_range(0.2..0.8) };
            *d = k + f;
        }
    }
    let mut x = SpikeTensor::zeros(cfg.batch, cfg.timesteps, cfg.input_channels);
    for v in &mut x.values {
        *v = (rng.gen::<f64>() < 0.3) as u8 as f64;
    }
    let labels = (0..cfg.batch).map(|_| rng.gen_range(0..cfg.classes)).collect();
    Ok((net, x, labels))
}

fn batch_loss(net: &Network, x: &SpikeTensor, labels: &[usize], forward_seed: u64) -> Result<f64> {
    let out = network_forward(net, x, Mode::Eval, forward_seed)?;
    loss(&out.scores, labels)
}

pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let (net, x, labels) = build_problem(cfg)?;
    let forward_seed = seed::derive(cfg.seed, stream::EVAL, 0, 0);
    let out = network_forward(&net, &x, Mode::Eval, forward_seed)?;
    let opts = BackwardOptions {
        corrupt: cfg.corrupt,
        ..Default::default()
    };
    let (_, grads) = backward(&out.record, &labels, &net, opts)?;

    let mut classes: Vec<ClassReport> = ParamKind::ALL
        .iter()
        .map(|k| ClassReport::new(k.name(), cfg.tolerance))
        .collect();
    let eps = cfg.epsilon;
    let mut probe = net.clone();
    for (slot, id) in grads.ids.iter().enumerate() {
        let class = ParamKind::ALL.iter().position(|&k| k == id.kind).unwrap();
        for idx in 0..grads.values[slot].len() {
            let orig = probe.tensors()[slot].1[idx];
            let mut at = |h: f64| -> Result<f64> {
                probe.tensors_mut()[slot].1[idx] = orig + h;
                batch_loss(&probe, &x, &labels, forward_seed)
            };
            let numeric = match cfg.stencil {
                Stencil::TwoPoint => (at(eps)? - at(-eps)?) / (2.0 * eps),
                Stencil::FourPoint => {
                    (-at(2.0 * eps)? + 8.0 * at(eps)? - 8.0 * at(-eps)? + at(-2.0 * eps)?) / (12.0 * eps)
                }
            };
            probe.tensors_mut()[slot].1[idx] = orig;
            classes[class].record(id.layer, idx, grads.values[slot][idx], numeric);
        }
    }

    if cfg.check_integer_delays && cfg.max_delay >= 2 {
        classes.push(check_integer_delays(cfg, &net, &x, &labels, forward_seed, opts)?);
    }
    Ok(GradcheckReport {
        seed: cfg.seed,
        classes,
    })
}

/// At integer delays the interpolated read has a kink. The analytic value is
/// the right derivative, compared against a second-order forward difference.
fn check_integer_delays(
    cfg: &GradcheckConfig,
    net: &Network,
    x: &SpikeTensor,
    labels: &[usize],
    forward_seed: u64,
    opts: BackwardOptions,
) -> Result<ClassReport> {
    let mut net = net.clone();
    let mut rng = seed::stream_rng(cfg.seed, stream::INIT, 2, 0);
    for syn in &mut net.synapses {
        for d in &mut syn.delays.d {
            *d = rng.gen_range(1..cfg.max_delay) as f64;
        }
    }
    let out = network_forward(&net, x, Mode::Eval, forward_seed)?;
    let (_, grads) = backward(&out.record, labels, &net, opts)?;
    let base = batch_loss(&net, x, labels, forward_seed)?;
    let h = cfg.epsilon;
    let mut report = ClassReport::new("delays_integer", cfg.integer_tolerance);
    for (slot, id) in grads.ids.iter().enumerate() {
        if id.kind != ParamKind::Delays {
            continue;
        }
        for idx in 0..grads.values[slot].len() {
            let orig = net.tensors()[slot].1[idx];
            net.tensors_mut()[slot].1[idx] = orig + h;
            let one = batch_loss(&net, x, labels, forward_seed)?;
            net.tensors_mut()[slot].1[idx] = orig + 2.0 * h;
            let two = batch_loss(&net, x, labels, forward_seed)?;
            net.tensors_mut()[slot].1[idx] = orig;
            let numeric = (-3.0 * base + 4.0 * one - two) / (2.0 * h);
            report.record(id.layer, idx, grads.values[slot][idx], numeric);
        }
    }
    Ok(report)
}
