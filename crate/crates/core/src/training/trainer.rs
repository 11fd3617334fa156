use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::data::{batch_indices, Dataset};
use crate::error::{Error, Result};
use crate::io;
use crate::network::{network_forward, Mode, Network, NetworkConfig};
use crate::seed::{self, stream};
use crate::training::backward::{backward, BackwardOptions};
use crate::training::loss::{accuracy, loss};
use crate::training::optim::{OptimizerState, PlateauScheduler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_weights: f64,
    /// Delay learning rate as a multiple of `lr_weights`.
    pub lr_delay_factor: f64,
    pub seed: u64,
    pub detach_reset: bool,
    /// Global L2 gradient norm cap.
    pub grad_clip: Option<f64>,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    /// Share of the training set held out when no validation split exists.
    pub valid_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            lr_weights: 0.01,
            lr_delay_factor: 10.0,
            seed: 0,
            detach_reset: false,
            grad_clip: None,
            scheduler_factor: 0.7,
            scheduler_patience: 5,
            valid_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn lr_delays(&self) -> f64 {
        self.lr_weights * self.lr_delay_factor
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr_weights >= 0.0 && self.lr_weights.is_finite() && self.lr_delay_factor >= 0.0) {
            return Err(Error::Config("learning rates must be finite and non-negative".into()));
        }
        if !(self.scheduler_factor > 0.0 && self.scheduler_factor <= 1.0) {
            return Err(Error::Config("scheduler factor must be in (0, 1]".into()));
        }
        if !(self.valid_fraction > 0.0 && self.valid_fraction < 1.0) {
            return Err(Error::Config("valid fraction must be in (0, 1)".into()));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("gradient clip must be positive".into()));
        }
        Ok(())
    }

    pub fn backward_options(&self) -> BackwardOptions {
        BackwardOptions {
            detach_reset: self.detach_reset,
            ..Default::default()
        }
    }

    pub fn optimizer(&self, net: &Network) -> OptimizerState {
        let mut o = OptimizerState::new(net, self.lr_weights, self.lr_delays());
        o.scheduler = PlateauScheduler {
            factor: self.scheduler_factor,
            patience: self.scheduler_patience,
            ..Default::default()
        };
        o.grad_clip = self.grad_clip;
        o
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Shd,
    Ssc,
    Gsc,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shd" => Ok(Preset::Shd),
            "ssc" => Ok(Preset::Ssc),
            "gsc" => Ok(Preset::Gsc),
            _ => Err(Error::Config(format!("unknown preset {s:?} (shd, ssc, gsc)"))),
        }
    }
}

impl Preset {
    pub fn network(self) -> NetworkConfig {
        match self {
            Preset::Shd => NetworkConfig {
                input_channels: 140,
                hidden: vec![128, 128],
                classes: 20,
                dropout: 0.5,
                ..Default::default()
            },
            Preset::Ssc => NetworkConfig {
                input_channels: 140,
                hidden: vec![512, 512],
                classes: 35,
                dropout: 0.25,
                ..Default::default()
            },
            Preset::Gsc => NetworkConfig {
                input_channels: 40,
                hidden: vec![512, 512],
                classes: 35,
                dropout: 0.25,
                ..Default::default()
            },
        }
    }

    pub fn train(self) -> TrainConfig {
        match self {
            Preset::Shd => TrainConfig {
                epochs: 100,
                batch_size: 128,
                lr_weights: 0.01,
                ..Default::default()
            },
            Preset::Ssc | Preset::Gsc => TrainConfig {
                epochs: 200,
                batch_size: 32,
                lr_weights: 0.001,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    /// Train-mode (dropout on) accuracy over the epoch's batches.
    pub accuracy: f64,
    pub batches: usize,
    /// True when an interrupt stopped the epoch early.
    pub interrupted: bool,
}

/// One pass over `ds` in seeded shuffled mini-batches.
pub fn train_epoch(
    net: &mut Network,
    ds: &Dataset,
    opt: &mut OptimizerState,
    cfg: &TrainConfig,
    epoch: usize,
    stop: Option<&AtomicBool>,
) -> Result<EpochStats> {
    if ds.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let order = batch_indices(
        ds.len(),
        cfg.batch_size,
        Some(seed::derive(cfg.seed, stream::SHUFFLE, epoch as u64, 0)),
    );
    let opts = cfg.backward_options();
    let (mut loss_sum, mut hits, mut seen, mut batches) = (0.0, 0usize, 0usize, 0usize);
    let mut interrupted = false;
    for (b, idx) in order.iter().enumerate() {
        let (x, labels) = ds.tensor(idx);
        let dropout_seed = seed::derive(cfg.seed, stream::DROPOUT, epoch as u64, b as u64);
        let out = network_forward(net, &x, Mode::Train, dropout_seed)?;
        let (value, grads) = backward(&out.record, &labels, net, opts)?;
        opt.apply(net, &grads)?;
        loss_sum += value * labels.len() as f64;
        hits += out.predictions().iter().zip(&labels).filter(|(p, l)| p == l).count();
        seen += labels.len();
        batches += 1;
        if stop.is_some_and(|s| s.load(Ordering::SeqCst)) {
            interrupted = true;
            break;
        }
    }
    Ok(EpochStats {
        loss: loss_sum / seen as f64,
        accuracy: hits as f64 / seen as f64,
        batches,
        interrupted,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    /// Total spikes per hidden layer over the dataset.
    pub spike_counts: Vec<u64>,
    pub samples: usize,
}

impl Evaluation {
    /// Hidden spikes per neuron per sample, averaged over all hidden neurons.
    pub fn mean_spikes_per_neuron(&self, net: &Network) -> f64 {
        let neurons: usize = net.config.hidden.iter().sum();
        if self.samples == 0 || neurons == 0 {
            return 0.0;
        }
        self.spike_counts.iter().sum::<u64>() as f64 / (neurons * self.samples) as f64
    }
}

/// Eval-mode pass. Initial states are drawn from `seed`, per batch.
pub fn evaluate(net: &Network, ds: &Dataset, batch_size: usize, seed_value: u64) -> Result<Evaluation> {
    let mut predictions = Vec::with_capacity(ds.len());
    let mut spike_counts = vec![0u64; net.num_hidden()];
    let mut loss_sum = 0.0;
    for (b, idx) in batch_indices(ds.len(), batch_size, None).iter().enumerate() {
        let (x, labels) = ds.tensor(idx);
        let out = network_forward(net, &x, Mode::Eval, seed::derive(seed_value, stream::EVAL, b as u64, 0))?;
        loss_sum += loss(&out.scores, &labels)? * labels.len() as f64;
        predictions.extend(out.predictions());
        for (acc, c) in spike_counts.iter_mut().zip(&out.spike_counts) {
            *acc += c;
        }
    }
    let labels = ds.labels();
    Ok(Evaluation {
        loss: if ds.is_empty() { 0.0 } else { loss_sum / ds.len() as f64 },
        accuracy: accuracy(&predictions, &labels),
        predictions,
        spike_counts,
        samples: ds.len(),
    })
}

/// One row of the metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub valid_acc: f64,
    pub lr_weights: f64,
    pub lr_delays: f64,
    pub mean_spikes_per_neuron: f64,
}

pub const METRICS_HEADER: &str =
    "epoch,train_loss,train_acc,valid_acc,lr_weights,lr_delays,mean_spikes_per_neuron";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            self.train_acc,
            self.valid_acc,
            self.lr_weights,
            self.lr_delays,
            self.mean_spikes_per_neuron
        )
    }
}

pub fn format_metrics(rows: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn write_metrics(path: impl AsRef<Path>, rows: &[EpochMetrics]) -> Result<()> {
    io::atomic_write(path, format_metrics(rows).as_bytes())
}

/// Training loop state: model, optimizer, and the metrics history.
pub struct Trainer {
    pub net: Network,
    pub opt: OptimizerState,
    pub config: TrainConfig,
    pub history: Vec<EpochMetrics>,
    pub best_valid: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome {
    pub metrics: EpochMetrics,
    pub improved: bool,
    pub interrupted: bool,
}

impl Trainer {
    pub fn new(net: Network, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        net.validate()?;
        let opt = config.optimizer(&net);
        Ok(Trainer {
            net,
            opt,
            config,
            history: Vec::new(),
            best_valid: None,
        })
    }

    /// Train one epoch, evaluate on `valid`, step the scheduler.
    pub fn run_epoch(&mut self, train: &Dataset, valid: &Dataset, stop: Option<&AtomicBool>) -> Result<EpochOutcome> {
        let epoch = self.history.len() + 1;
        let (lr_w, lr_d) = (self.opt.lr_weights, self.opt.lr_delays);
        let stats = train_epoch(&mut self.net, train, &mut self.opt, &self.config, epoch, stop)?;
        let eval_seed = seed::derive(self.config.seed, stream::EVAL, 0, 0);
        let ev = evaluate(&self.net, valid, self.config.batch_size, eval_seed)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: stats.loss,
            train_acc: stats.accuracy,
            valid_acc: ev.accuracy,
            lr_weights: lr_w,
            lr_delays: lr_d,
            mean_spikes_per_neuron: ev.mean_spikes_per_neuron(&self.net),
        };
        let improved = self.best_valid.is_none_or(|b| ev.accuracy > b);
        if improved {
            self.best_valid = Some(ev.accuracy);
        }
        if !stats.interrupted {
            self.opt.scheduler_step(ev.accuracy);
        }
        self.history.push(metrics.clone());
        Ok(EpochOutcome {
            metrics,
            improved,
            interrupted: stats.interrupted,
        })
    }
}
