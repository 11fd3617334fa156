//! Adaptation regime map, spike statistics and parameter distribution
//! exports.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::io;
use crate::network::{network_forward, Mode, Network};
use crate::neuron::{heaviside, membrane_update};
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridRange {
    pub fn values(&self) -> Vec<f64> {
        let span = self.max - self.min;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.max
                } else {
                    self.min + span * i as f64 / (self.steps - 1) as f64
                }
            })
            .collect()
    }
}

/// A single neuron driven by one input spike train, swept over `(a, b)`.
/// Fields missing from a TOML spec take their canonical values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeMapSpec {
    pub a_range: GridRange,
    pub b_range: GridRange,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub input_weight: f64,
    pub timesteps: usize,
    /// Timesteps carrying an input spike.
    pub spike_times: Vec<usize>,
}

impl Default for RegimeMapSpec {
    fn default() -> Self {
        Self::canonical()
    }
}

impl RegimeMapSpec {
    /// 12 spikes every 8 steps from t = 4 over 100 steps.
    pub fn canonical() -> Self {
        RegimeMapSpec {
            a_range: GridRange { min: -1.0, max: 1.0, steps: 81 },
            b_range: GridRange { min: -0.5, max: 2.5, steps: 81 },
            alpha: 0.96,
            beta: 0.96,
            theta: 1.0,
            input_weight: 30.0,
            timesteps: 100,
            spike_times: (0..12).map(|k| 4 + 8 * k).collect(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(format!("regime map spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&io::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("a_range", &self.a_range), ("b_range", &self.b_range)] {
            if r.steps < 2 || !(r.min < r.max) {
                return Err(Error::Config(format!("{name} needs min < max and at least 2 steps")));
            }
        }
        if let Some(&t) = self.spike_times.iter().find(|&&t| t >= self.timesteps) {
            return Err(Error::Config(format!("spike time {t} outside {} steps", self.timesteps)));
        }
        if [self.alpha, self.beta, self.theta, self.input_weight].iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("neuron constants must be finite".into()));
        }
        Ok(())
    }

    pub fn stimulus(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.timesteps];
        for &t in &self.spike_times {
            s[t] = 1.0;
        }
        s
    }

    pub fn input_spike_count(&self) -> usize {
        self.stimulus().iter().filter(|&&x| x > 0.0).count()
    }
}

/// Output spikes of one neuron started from rest.
pub fn count_spikes(stimulus: &[f64], weight: f64, alpha: f64, beta: f64, a: f64, b: f64, theta: f64) -> u32 {
    let (mut u, mut w, mut s) = (0.0, 0.0, 0.0);
    let mut count = 0;
    for &x in stimulus {
        let (u_new, w_new) = membrane_update(u, w, s, alpha, beta, a, b, weight * x, theta);
        u = u_new;
        w = w_new;
        s = heaviside(u, theta);
        count += s as u32;
    }
    count
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeMap {
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    /// `a`-major: `counts[ia * b_values.len() + ib]`.
    pub counts: Vec<u32>,
}

/// A rise in spike count as `b` grows at fixed `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityFinding {
    pub a: f64,
    pub b_low: f64,
    pub b_high: f64,
    pub count_low: u32,
    pub count_high: u32,
}

impl RegimeMap {
    pub fn get(&self, ia: usize, ib: usize) -> u32 {
        self.counts[ia * self.b_values.len() + ib]
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64, u32)> + '_ {
        self.a_values.iter().enumerate().flat_map(move |(ia, &a)| {
            self.b_values.iter().enumerate().map(move |(ib, &b)| (a, b, self.get(ia, ib)))
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("a,b,count\n");
        for (a, b, c) in self.points() {
            out.push_str(&format!("{a},{b},{c}\n"));
        }
        out
    }

    /// Places where the count increases with `b` for some `a >= 0`.
    pub fn monotonicity_findings(&self) -> Vec<MonotonicityFinding> {
        let mut out = Vec::new();
        for (ia, &a) in self.a_values.iter().enumerate() {
            if a < 0.0 {
                continue;
            }
            for ib in 1..self.b_values.len() {
                let (lo, hi) = (self.get(ia, ib - 1), self.get(ia, ib));
                if hi > lo {
                    out.push(MonotonicityFinding {
                        a,
                        b_low: self.b_values[ib - 1],
                        b_high: self.b_values[ib],
                        count_low: lo,
                        count_high: hi,
                    });
                }
            }
        }
        out
    }
}

pub fn regime_map(spec: &RegimeMapSpec) -> Result<RegimeMap> {
    spec.validate()?;
    let a_values = spec.a_range.values();
    let b_values = spec.b_range.values();
    let stimulus = spec.stimulus();
    let counts = a_values
        .par_iter()
        .flat_map_iter(|&a| {
            let stimulus = &stimulus;
            b_values.iter().map(move |&b| {
                count_spikes(stimulus, spec.input_weight, spec.alpha, spec.beta, a, b, spec.theta)
            })
        })
        .collect();
    Ok(RegimeMap {
        a_values,
        b_values,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpikeStats {
    pub total_spikes: u64,
    pub neurons: usize,
    pub timesteps: usize,
    pub samples: usize,
}

impl LayerSpikeStats {
    /// Spikes per neuron per sample.
    pub fn spikes_per_neuron(&self) -> f64 {
        if self.neurons == 0 || self.samples == 0 {
            return 0.0;
        }
        self.total_spikes as f64 / (self.neurons * self.samples) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeStats {
    pub layers: Vec<LayerSpikeStats>,
}

impl SpikeStats {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,total_spikes,neurons,timesteps,samples,spikes_per_neuron\n");
        for (l, s) in self.layers.iter().enumerate() {
            out.push_str(&format!(
                "{l},{},{},{},{},{}\n",
                s.total_spikes,
                s.neurons,
                s.timesteps,
                s.samples,
                s.spikes_per_neuron()
            ));
        }
        out
    }
}

/// Eval-mode hidden spike totals over a dataset.
pub fn spike_stats(net: &Network, ds: &Dataset, batch_size: usize, seed_value: u64) -> Result<SpikeStats> {
    let mut totals = vec![0u64; net.num_hidden()];
    for (b, idx) in crate::data::batch_indices(ds.len(), batch_size, None).iter().enumerate() {
        let (x, _) = ds.tensor(idx);
        let out = network_forward(net, &x, Mode::Eval, seed::derive(seed_value, stream::EVAL, b as u64, 0))?;
        for (t, c) in totals.iter_mut().zip(&out.spike_counts) {
            *t += c;
        }
    }
    let horizon = net.config.horizon_for(ds.timesteps);
    Ok(SpikeStats {
        layers: totals
            .into_iter()
            .zip(&net.config.hidden)
            .map(|(total_spikes, &neurons)| LayerSpikeStats {
                total_spikes,
                neurons,
                timesteps: horizon,
                samples: ds.len(),
            })
            .collect(),
    })
}

/// Write one CSV per neuron parameter per hidden layer
/// (`layer{l}_{param}.csv`, columns `neuron,value`) and one per synapse set
/// for delays (`synapses{l}_delays.csv`, columns `pre,post,delay`).
pub fn export_distributions(net: &Network, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    for (l, p) in net.neurons.iter().enumerate() {
        for (name, xs) in [("alpha", &p.alpha), ("beta", &p.beta), ("a", &p.a), ("b", &p.b)] {
            let mut text = String::from("neuron,value\n");
            for (i, x) in xs.iter().enumerate() {
                text.push_str(&format!("{i},{x}\n"));
            }
            let path = dir.join(format!("layer{l}_{name}.csv"));
            io::atomic_write(&path, text.as_bytes())?;
            written.push(path);
        }
    }
    for (l, s) in net.synapses.iter().enumerate() {
        let mut text = String::from("pre,post,delay\n");
        for j in 0..s.pre {
            for i in 0..s.post {
                text.push_str(&format!("{j},{i},{}\n", s.delays.get(j, i)));
            }
        }
        let path = dir.join(format!("synapses{l}_delays.csv"));
        io::atomic_write(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
