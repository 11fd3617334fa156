//! Feed-forward spiking network: hidden AdLIF+ layers joined by delayed
//! synapses, followed by a memoryless readout layer.
//!
//! Readout neurons have an infinite threshold, so their membrane potential is
//! just the weighted (delayed) input `u_out[t] = F_out * a[t] + bias`. Class
//! scores are accumulated over the simulated horizon.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SpikeTensor;
use crate::delay::{interpolate, split_delay, DelayLine, DelayMatrix, DEFAULT_MAX_DELAY};
use crate::error::{ensure_len, Error, Result};
use crate::neuron::{membrane_update, LayerState, NeuronBounds, NeuronParams, StateInit};
use crate::seed::{self, stream};
use crate::surrogate::Surrogate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutMode {
    /// Per-timestep softmax of the readout potentials, summed over time.
    #[default]
    SoftmaxSum,
    /// Readout potentials summed over time.
    SumPotentials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Simulate exactly the input length.
    #[default]
    T,
    /// Append `max_delay` zero steps so late-delayed spikes still arrive.
    TPlusDmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronModel {
    #[default]
    AdlifPlus,
    /// `a = b = 0`, only the membrane leak is trained.
    Lif,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub dropout: f64,
    pub max_delay: usize,
    pub theta: f64,
    pub readout: ReadoutMode,
    pub horizon: Horizon,
    pub neuron: NeuronModel,
    pub learn_delays: bool,
    pub state_init: StateInit,
    pub surrogate: Surrogate,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_channels: 140,
            hidden: vec![128, 128],
            classes: 20,
            dropout: 0.5,
            max_delay: DEFAULT_MAX_DELAY,
            theta: 1.0,
            readout: ReadoutMode::SoftmaxSum,
            horizon: Horizon::T,
            neuron: NeuronModel::AdlifPlus,
            learn_delays: true,
            state_init: StateInit::RandomUniform,
            surrogate: Surrogate::Boxcar,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.classes == 0 {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("need at least one non-empty hidden layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !self.theta.is_finite() || self.theta <= 0.0 {
            return Err(Error::Config("threshold must be positive".into()));
        }
        if let Surrogate::SoftSigmoid { beta } = self.surrogate {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::Config("soft sigmoid steepness must be positive".into()));
            }
        }
        Ok(())
    }

    /// Layer widths from input to readout.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_channels);
        w.extend_from_slice(&self.hidden);
        w.push(self.classes);
        w
    }

    pub fn horizon_for(&self, timesteps: usize) -> usize {
        match self.horizon {
            Horizon::T => timesteps,
            Horizon::TPlusDmax => timesteps + self.max_delay,
        }
    }

    pub fn bounds(&self) -> NeuronBounds {
        NeuronBounds::ADLIF_PLUS
    }
}

/// Weights, bias and delays of one layer-to-layer connection.
#[derive(Debug, Clone, PartialEq)]
pub struct SynapseSet {
    pub pre: usize,
    pub post: usize,
    /// `pre`-major: `weights[j * post + i]` connects `j` to `i`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub delays: DelayMatrix,
}

impl SynapseSet {
    pub fn zeros(pre: usize, post: usize, d_max: usize) -> Self {
        SynapseSet {
            pre,
            post,
            weights: vec![0.0; pre * post],
            bias: vec![0.0; post],
            delays: DelayMatrix::zeros(pre, post, d_max),
        }
    }

    /// Xavier-uniform weights, zero bias, zero delays.
    pub fn xavier(pre: usize, post: usize, d_max: usize, rng: &mut seed::Rng) -> Self {
        let bound = (6.0 / (pre + post) as f64).sqrt();
        let mut syn = SynapseSet::zeros(pre, post, d_max);
        for w in &mut syn.weights {
            *w = rng.gen_range(-bound..bound);
        }
        syn
    }

    pub fn validate(&self) -> Result<()> {
        ensure_len("synapse weights", self.pre * self.post, self.weights.len())?;
        ensure_len("synapse bias", self.post, self.bias.len())?;
        ensure_len("synapse delays", self.pre * self.post, self.delays.d.len())?;
        if self.delays.pre != self.pre || self.delays.post != self.post {
            return Err(Error::InvalidArgument("delay matrix shape differs from weights".into()));
        }
        if self.weights.iter().chain(&self.bias).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("synapse parameters must be finite".into()));
        }
        self.delays.validate()
    }

    fn split_delays(&self) -> (Vec<usize>, Vec<f64>) {
        self.delays
            .d
            .iter()
            .map(|&d| split_delay(d, self.delays.d_max))
            .unzip()
    }
}

/// Input current of every postsynaptic neuron at the line's current time.
/// The sum over `j` runs in index order and the bias is added last.
pub fn layer_forward(line: &DelayLine, syn: &SynapseSet) -> Result<Vec<f64>> {
    ensure_len("delay line width", syn.pre, line.width())?;
    syn.delays.validate()?;
    let (lags, fracs) = syn.split_delays();
    let zero = vec![0.0; syn.pre];
    let rows: Vec<&[f64]> = (0..line.depth())
        .map(|k| line.row(k).unwrap_or(&zero))
        .collect();
    let mut out = vec![0.0; syn.post];
    accumulate_currents(syn, &lags, &fracs, &rows, None, &mut out);
    Ok(out)
}

/// `out[i] = sum_j F_ji * a_ji + bias_i`. `active` optionally lists for each
/// presynaptic neuron whether anything non-zero is inside the line; inactive
/// rows contribute exact zeros and are skipped.
#[inline]
fn accumulate_currents(
    syn: &SynapseSet,
    lags: &[usize],
    fracs: &[f64],
    rows: &[&[f64]],
    active: Option<&[bool]>,
    out: &mut [f64],
) {
    let post = syn.post;
    out.iter_mut().for_each(|x| *x = 0.0);
    for j in 0..syn.pre {
        if let Some(act) = active {
            if !act[j] {
                continue;
            }
        }
        let base = j * post;
        for i in 0..post {
            let idx = base + i;
            let k = lags[idx];
            let f = fracs[idx];
            let recent = rows[k][j];
            let older = if f == 0.0 { 0.0 } else { rows[k + 1][j] };
            out[i] += syn.weights[idx] * interpolate(recent, older, f);
        }
    }
    for (o, b) in out.iter_mut().zip(&syn.bias) {
        *o += b;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Saved forward quantities of one hidden layer, all `horizon x neurons`
/// row-major unless noted.
#[derive(Debug, Clone, Default)]
pub struct LayerTrace {
    pub u0: Vec<f64>,
    pub w0: Vec<f64>,
    pub current: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub s: Vec<f64>,
    /// Dropout multiplier (0 or `1 / (1 - p)`); empty when no dropout ran.
    pub keep: Vec<f64>,
    /// What the next synapse set sees: `s * keep`.
    pub output: Vec<f64>,
}

/// Tape of one sample. The delayed activations are not stored: they are a
/// pure function of the presynaptic outputs kept here and the delays.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub horizon: usize,
    /// Zero-padded input, `horizon x input_channels`.
    pub input: Vec<f64>,
    pub hidden: Vec<LayerTrace>,
    /// Readout potentials, `horizon x classes`.
    pub readout: Vec<f64>,
    pub scores: Vec<f64>,
}

impl SampleRecord {
    /// Presynaptic signal of synapse set `l`.
    pub fn presynaptic(&self, l: usize) -> &[f64] {
        if l == 0 {
            &self.input
        } else {
            &self.hidden[l - 1].output
        }
    }

    /// Spikes per hidden layer (entries counted as spikes when `s > 0.5`).
    pub fn spike_counts(&self) -> Vec<u64> {
        self.hidden
            .iter()
            .map(|h| h.s.iter().filter(|&&s| s > 0.5).count() as u64)
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ForwardRecord {
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub scores: Vec<Vec<f64>>,
    pub record: ForwardRecord,
    /// Total spikes per hidden layer over the batch.
    pub spike_counts: Vec<u64>,
}

impl ForwardOutput {
    pub fn predictions(&self) -> Vec<usize> {
        self.scores.iter().map(|s| argmax(s)).collect()
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Class scores from a `horizon x classes` readout trace.
pub fn readout(u_out: &[f64], classes: usize, mode: ReadoutMode) -> Vec<f64> {
    let mut scores = vec![0.0; classes];
    for row in u_out.chunks_exact(classes) {
        match mode {
            ReadoutMode::SoftmaxSum => {
                for (s, p) in scores.iter_mut().zip(softmax(row)) {
                    *s += p;
                }
            }
            ReadoutMode::SumPotentials => {
                for (s, u) in scores.iter_mut().zip(row) {
                    *s += u;
                }
            }
        }
    }
    scores
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKind {
    Weights,
    Bias,
    Delays,
    Alpha,
    Beta,
    A,
    B,
}

impl ParamKind {
    pub const ALL: [ParamKind; 7] = [
        ParamKind::Weights,
        ParamKind::Bias,
        ParamKind::Delays,
        ParamKind::Alpha,
        ParamKind::Beta,
        ParamKind::A,
        ParamKind::B,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ParamKind::Weights => "weights",
            ParamKind::Bias => "bias",
            ParamKind::Delays => "delays",
            ParamKind::Alpha => "alpha",
            ParamKind::Beta => "beta",
            ParamKind::A => "a",
            ParamKind::B => "b",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId {
    pub kind: ParamKind,
    /// Synapse set index for weights/bias/delays, hidden layer index otherwise.
    pub layer: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    /// `hidden.len() + 1` synapse sets; the last one feeds the readout.
    pub synapses: Vec<SynapseSet>,
    pub neurons: Vec<NeuronParams>,
}

impl Network {
    pub fn new(config: NetworkConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::stream_rng(init_seed, stream::INIT, 0, 0);
        let widths = config.widths();
        let synapses = widths
            .windows(2)
            .map(|w| SynapseSet::xavier(w[0], w[1], config.max_delay, &mut rng))
            .collect();
        let bounds = config.bounds();
        let neurons = config
            .hidden
            .iter()
            .map(|&n| -> Result<NeuronParams> {
                let p = NeuronParams::init_with(n, &bounds, &mut rng)?;
                Ok(match config.neuron {
                    NeuronModel::AdlifPlus => p,
                    NeuronModel::Lif => NeuronParams::lif(p.alpha),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Network {
            config,
            synapses,
            neurons,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let widths = self.config.widths();
        ensure_len("synapse sets", widths.len() - 1, self.synapses.len())?;
        ensure_len("hidden layers", self.config.hidden.len(), self.neurons.len())?;
        for (l, syn) in self.synapses.iter().enumerate() {
            ensure_len("synapse pre size", widths[l], syn.pre)?;
            ensure_len("synapse post size", widths[l + 1], syn.post)?;
            ensure_len("synapse max delay", self.config.max_delay, syn.delays.d_max)?;
            syn.validate()?;
        }
        for (l, p) in self.neurons.iter().enumerate() {
            p.validate()?;
            ensure_len("neuron parameters", self.config.hidden[l], p.len())?;
        }
        Ok(())
    }

    pub fn num_hidden(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        match id.kind {
            ParamKind::Delays => self.config.learn_delays && self.config.max_delay > 0,
            ParamKind::Beta | ParamKind::A | ParamKind::B => {
                self.config.neuron == NeuronModel::AdlifPlus
            }
            _ => true,
        }
    }

    /// All parameter tensors in a fixed order: per synapse set
    /// (weights, bias, delays), then per hidden layer (alpha, beta, a, b).
    pub fn tensors(&self) -> Vec<(ParamId, &[f64])> {
        let mut out: Vec<(ParamId, &[f64])> = Vec::new();
        for (l, s) in self.synapses.iter().enumerate() {
            out.push((ParamId { kind: ParamKind::Weights, layer: l }, &s.weights));
            out.push((ParamId { kind: ParamKind::Bias, layer: l }, &s.bias));
            out.push((ParamId { kind: ParamKind::Delays, layer: l }, &s.delays.d));
        }
        for (l, p) in self.neurons.iter().enumerate() {
            out.push((ParamId { kind: ParamKind::Alpha, layer: l }, &p.alpha));
            out.push((ParamId { kind: ParamKind::Beta, layer: l }, &p.beta));
            out.push((ParamId { kind: ParamKind::A, layer: l }, &p.a));
            out.push((ParamId { kind: ParamKind::B, layer: l }, &p.b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamId, &mut [f64])> {
        let mut out: Vec<(ParamId, &mut [f64])> = Vec::new();
        for (l, s) in self.synapses.iter_mut().enumerate() {
            out.push((ParamId { kind: ParamKind::Weights, layer: l }, &mut s.weights));
            out.push((ParamId { kind: ParamKind::Bias, layer: l }, &mut s.bias));
            out.push((ParamId { kind: ParamKind::Delays, layer: l }, &mut s.delays.d));
        }
        for (l, p) in self.neurons.iter_mut().enumerate() {
            out.push((ParamId { kind: ParamKind::Alpha, layer: l }, &mut p.alpha));
            out.push((ParamId { kind: ParamKind::Beta, layer: l }, &mut p.beta));
            out.push((ParamId { kind: ParamKind::A, layer: l }, &mut p.a));
            out.push((ParamId { kind: ParamKind::B, layer: l }, &mut p.b));
        }
        out
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.tensors()
            .iter()
            .filter(|(id, _)| self.is_trainable(*id))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Clip neuron parameters and clamp delays into their bounds.
    pub fn project(&mut self) {
        let bounds = self.config.bounds();
        for p in &mut self.neurons {
            p.clip(&bounds);
            if self.config.neuron == NeuronModel::Lif {
                p.a.iter_mut().for_each(|x| *x = 0.0);
                p.b.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        for s in &mut self.synapses {
            s.delays.clamp();
        }
    }

    /// Round all delays to integers (inference-time option).
    pub fn round_delays(&mut self) {
        for s in &mut self.synapses {
            s.delays.round();
        }
    }

    /// Run one sample (`timesteps x input_channels`, row-major).
    pub fn forward_sample(
        &self,
        input: &[f64],
        timesteps: usize,
        mode: Mode,
        sample_seed: u64,
    ) -> Result<SampleRecord> {
        let cfg = &self.config;
        ensure_len("input sample", timesteps * cfg.input_channels, input.len())?;
        let horizon = cfg.horizon_for(timesteps);
        let mut padded = vec![0.0; horizon * cfg.input_channels];
        padded[..input.len()].copy_from_slice(input);
        if let Some(i) = padded.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                stage: "input",
                layer: 0,
                timestep: i / cfg.input_channels,
                index: i % cfg.input_channels,
            });
        }

        let mut rng = seed::rng(sample_seed);
        let theta = cfg.theta;
        let keep_prob = 1.0 - cfg.dropout;
        let dropout = mode == Mode::Train && cfg.dropout > 0.0;
        let mut hidden: Vec<LayerTrace> = Vec::with_capacity(self.neurons.len());

        for (l, params) in self.neurons.iter().enumerate() {
            let syn = &self.synapses[l];
            let n = syn.post;
            let pre: &[f64] = if l == 0 { &padded } else { &hidden[l - 1].output };
            let current = synaptic_currents(syn, pre, horizon)?;

            let init_mode = match cfg.neuron {
                NeuronModel::Lif => StateInit::Zeros,
                NeuronModel::AdlifPlus => cfg.state_init,
            };
            let init = LayerState::init_with(n, &mut rng, init_mode)?;
            let mut trace = LayerTrace {
                u0: init.u.clone(),
                w0: init.w.clone(),
                current,
                u: vec![0.0; horizon * n],
                w: vec![0.0; horizon * n],
                s: vec![0.0; horizon * n],
                keep: Vec::new(),
                output: Vec::new(),
            };
            let (mut u_prev, mut w_prev, mut s_prev) = (init.u, init.w, init.s);
            for t in 0..horizon {
                let row = t * n;
                for i in 0..n {
                    let (u, w) = membrane_update(
                        u_prev[i],
                        w_prev[i],
                        s_prev[i],
                        params.alpha[i],
                        params.beta[i],
                        params.a[i],
                        params.b[i],
                        trace.current[row + i],
                        theta,
                    );
                    if !(u.is_finite() && w.is_finite()) {
                        return Err(Error::NonFinite {
                            stage: "hidden state",
                            layer: l,
                            timestep: t,
                            index: i,
                        });
                    }
                    let s = cfg.surrogate.spike(u, theta);
                    trace.u[row + i] = u;
                    trace.w[row + i] = w;
                    trace.s[row + i] = s;
                    u_prev[i] = u;
                    w_prev[i] = w;
                    s_prev[i] = s;
                }
            }
            if dropout {
                let scale = 1.0 / keep_prob;
                trace.keep = (0..horizon * n)
                    .map(|_| if rng.gen::<f64>() < keep_prob { scale } else { 0.0 })
                    .collect();
                trace.output = trace.s.iter().zip(&trace.keep).map(|(s, k)| s * k).collect();
            } else {
                trace.output = trace.s.clone();
            }
            hidden.push(trace);
        }

        let last = self.synapses.last().expect("validated network has a readout");
        let readout_pre = if hidden.is_empty() { &padded } else { &hidden.last().unwrap().output };
        let u_out = synaptic_currents(last, readout_pre, horizon)?;
        if let Some(i) = u_out.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                stage: "readout",
                layer: self.neurons.len(),
                timestep: i / cfg.classes,
                index: i % cfg.classes,
            });
        }
        let scores = readout(&u_out, cfg.classes, cfg.readout);
        Ok(SampleRecord {
            horizon,
            input: padded,
            hidden,
            readout: u_out,
            scores,
        })
    }
}

/// Currents of one synapse set over the whole horizon, streamed through a
/// delay line. `pre` is `horizon x syn.pre`.
pub(crate) fn synaptic_currents(syn: &SynapseSet, pre: &[f64], horizon: usize) -> Result<Vec<f64>> {
    ensure_len("presynaptic trace", horizon * syn.pre, pre.len())?;
    let d_max = syn.delays.d_max;
    let (lags, fracs) = syn.split_delays();
    let mut line = DelayLine::new(syn.pre, d_max);
    // last timestep at which each presynaptic neuron was non-zero
    let mut last_active: Vec<Option<usize>> = vec![None; syn.pre];
    let mut active = vec![false; syn.pre];
    let zero = vec![0.0; syn.pre];
    let mut out = vec![0.0; horizon * syn.post];
    for t in 0..horizon {
        let row = &pre[t * syn.pre..(t + 1) * syn.pre];
        line.push(row)?;
        for j in 0..syn.pre {
            if row[j] != 0.0 {
                last_active[j] = Some(t);
            }
            active[j] = matches!(last_active[j], Some(ta) if t - ta <= d_max);
        }
        let rows: Vec<&[f64]> = (0..=d_max).map(|k| line.row(k).unwrap_or(&zero)).collect();
        accumulate_currents(
            syn,
            &lags,
            &fracs,
            &rows,
            Some(&active),
            &mut out[t * syn.post..(t + 1) * syn.post],
        );
    }
    Ok(out)
}

/// Forward a whole batch. Samples are independent and run in parallel; the
/// per-sample seed is derived from `rng_seed` and the sample index.
pub fn network_forward(
    net: &Network,
    batch: &SpikeTensor,
    mode: Mode,
    rng_seed: u64,
) -> Result<ForwardOutput> {
    ensure_len("batch channels", net.config.input_channels, batch.channels)?;
    let samples = (0..batch.batch)
        .into_par_iter()
        .map(|b| {
            net.forward_sample(
                batch.sample(b),
                batch.timesteps,
                mode,
                seed::derive(rng_seed, stream::SAMPLE, b as u64, 0),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut spike_counts = vec![0u64; net.num_hidden()];
    for s in &samples {
        for (acc, c) in spike_counts.iter_mut().zip(s.spike_counts()) {
            *acc += c;
        }
    }
    Ok(ForwardOutput {
        scores: samples.iter().map(|s| s.scores.clone()).collect(),
        record: ForwardRecord { samples },
        spike_counts,
    })
}
