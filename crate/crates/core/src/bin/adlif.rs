//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure (including an interrupted run or
//! a failed gradient check), 2 invalid configuration or missing inputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use adlif::analysis::{export_distributions, regime_map, spike_stats, RegimeMapSpec};
use adlif::checkpoint;
use adlif::config::RunConfig;
use adlif::data::{self, BinSpec, Dataset, DatasetManifest, Split};
use adlif::gradcheck::{gradcheck, GradcheckConfig};
use adlif::io;
use adlif::seed::{self, stream};
use adlif::training::{evaluate, write_metrics, Preset, Trainer};
use adlif::{Error, Network};

const OUTPUT_ROOT_ENV: &str = "ADLIF_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "adlif", version, about = "Spiking networks with adaptive neurons and learnable delays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write metrics and checkpoints.
    Train(TrainArgs),
    /// Report accuracy of a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Spike counts of one adaptive neuron over an (a, b) grid.
    RegimeMap(RegimeMapArgs),
    /// Hidden-layer spike statistics and parameter distributions.
    Stats(StatsArgs),
    /// Bin an event file into a binned tensor file.
    BinData(BinDataArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Hyperparameter preset: shd, ssc or gsc.
    #[arg(long, default_value = "shd")]
    preset: String,
    /// TOML run configuration layered over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Dataset manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory, relative to the output root.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory that relative output paths resolve against.
    #[arg(long, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Checkpoint path, or `best` / `last` inside the output directory.
    #[arg(long, default_value = "best")]
    checkpoint: String,
    /// train, valid or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Round delays to whole timesteps before evaluating.
    #[arg(long)]
    round_delays: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds to check.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 8)]
    input: usize,
    /// Hidden widths, comma separated.
    #[arg(long, default_value = "8,8", value_delimiter = ',')]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    timesteps: usize,
    #[arg(long, default_value_t = 2)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    max_delay: usize,
    #[arg(long, default_value_t = 3.0)]
    soft_beta: f64,
    #[arg(long, default_value_t = 2.0)]
    weight_scale: f64,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    /// Central difference stencil: 4 (fourth order) or 2 (second order).
    #[arg(long, default_value = "4")]
    stencil: String,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[arg(long, hide = true)]
    corrupt: bool,
}

#[derive(Args)]
struct RegimeMapArgs {
    /// TOML regime map description; the canonical one when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// CSV destination; defaults to `regime_map.csv` in the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    output_dir: PathBuf,
    #[arg(long, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value = "best")]
    checkpoint: String,
    #[arg(long, default_value = "test")]
    split: String,
    /// Skip the spike statistics and only export parameter distributions.
    #[arg(long)]
    distributions_only: bool,
}

#[derive(Args)]
struct BinDataArgs {
    /// Event text file.
    #[arg(long)]
    input: PathBuf,
    /// Binned tensor destination.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 5)]
    channel_factor: usize,
    /// Bin width in seconds.
    #[arg(long, default_value_t = 0.01)]
    bin_width: f64,
    #[arg(long, default_value_t = 100)]
    timesteps: usize,
    /// Saturate bins at one event.
    #[arg(long)]
    binarize: bool,
}

/// Failure classified by exit code.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

type CmdResult = Result<(), Failure>;

fn resolve_output(root: Option<&Path>, dir: &Path) -> PathBuf {
    match root {
        Some(r) if dir.is_relative() => r.join(dir),
        _ => dir.to_path_buf(),
    }
}

struct Resolved {
    cfg: RunConfig,
    output_dir: PathBuf,
}

fn resolve_run(args: &RunArgs, extra: &[String]) -> Result<Resolved, Failure> {
    let preset: Preset = args.preset.parse().map_err(usage)?;
    let mut overrides = args.overrides.clone();
    overrides.extend_from_slice(extra);
    if let Some(m) = &args.manifest {
        overrides.push(format!("manifest={:?}", m.display().to_string()));
    }
    if let Some(d) = &args.output_dir {
        overrides.push(format!("output_dir={:?}", d.display().to_string()));
    }
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(p) = &args.config {
        if !p.is_file() {
            return Err(usage(format!("config file {} not found", p.display())));
        }
    }
    let cfg = RunConfig::load(preset, args.config.as_deref(), &overrides).map_err(usage)?;
    let output_dir = resolve_output(args.output_root.as_deref(), &cfg.output_dir);
    Ok(Resolved { cfg, output_dir })
}

fn load_manifest(cfg: &RunConfig) -> Result<DatasetManifest, Failure> {
    let path = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| usage("no dataset manifest given (--manifest or `manifest` in the config)"))?;
    if !path.is_file() {
        return Err(usage(format!("manifest {} not found", path.display())));
    }
    let m = DatasetManifest::load(path).map_err(usage)?;
    m.check_files().map_err(usage)?;
    Ok(m)
}

fn check_dataset(ds: &Dataset, net_cfg: &adlif::NetworkConfig, name: &str) -> Result<(), Failure> {
    if ds.channels != net_cfg.input_channels {
        return Err(usage(format!(
            "{name} split has {} channels, network expects {}",
            ds.channels, net_cfg.input_channels
        )));
    }
    if ds.classes > net_cfg.classes {
        return Err(usage(format!(
            "{name} split has {} classes, network has {}",
            ds.classes, net_cfg.classes
        )));
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let mut extra = Vec::new();
    if let Some(e) = args.epochs {
        extra.push(format!("train.epochs={e}"));
    }
    if let Some(b) = args.batch_size {
        extra.push(format!("train.batch_size={b}"));
    }
    if let Some(lr) = args.lr {
        extra.push(format!("train.lr_weights={lr}"));
    }
    let Resolved { cfg, output_dir } = resolve_run(&args.run, &extra)?;
    let manifest = load_manifest(&cfg)?;
    let full_train = manifest.load_split(Split::Train)?.expect("train split is required");
    check_dataset(&full_train, &cfg.network, "train")?;
    let (train, valid) = match manifest.load_split(Split::Valid)? {
        Some(v) => {
            check_dataset(&v, &cfg.network, "valid")?;
            (full_train, v)
        }
        None => {
            let split_seed = seed::derive(cfg.train.seed, stream::SPLIT, 0, 0);
            data::split_validation(&full_train, cfg.train.valid_fraction, split_seed).map_err(usage)?
        }
    };
    if train.is_empty() {
        return Err(usage("training split is empty"));
    }

    std::fs::create_dir_all(&output_dir).map_err(|e| Error::io(&output_dir, e))?;
    io::atomic_write(output_dir.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        if let Err(e) = ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst)) {
            warn!("cannot install interrupt handler: {e}");
        }
    }

    let net = Network::new(cfg.network.clone(), cfg.train.seed)?;
    info!(
        "training {} trainable parameters on {} samples ({} validation)",
        net.num_trainable(),
        train.len(),
        valid.len()
    );
    let mut trainer = Trainer::new(net, cfg.train.clone())?;
    let metrics_path = output_dir.join("metrics.csv");
    for _ in 0..cfg.train.epochs {
        let out = trainer.run_epoch(&train, &valid, Some(&stop))?;
        let m = &out.metrics;
        println!(
            "epoch {:>4}  loss {:.4}  train acc {:.4}  valid acc {:.4}  lr {:.3e}  spikes/neuron {:.2}",
            m.epoch, m.train_loss, m.train_acc, m.valid_acc, m.lr_weights, m.mean_spikes_per_neuron
        );
        write_metrics(&metrics_path, &trainer.history)?;
        checkpoint::save(&trainer.net, output_dir.join("last.snnc"))?;
        if out.improved {
            checkpoint::save(&trainer.net, output_dir.join("best.snnc"))?;
        }
        if out.interrupted {
            return Err(Failure::Runtime(format!(
                "interrupted during epoch {}; last checkpoint written",
                m.epoch
            )));
        }
    }
    println!(
        "best valid acc {:.4}; outputs in {}",
        trainer.best_valid.unwrap_or(0.0),
        output_dir.display()
    );
    Ok(())
}

fn resolve_checkpoint(name: &str, output_dir: &Path) -> Result<PathBuf, Failure> {
    let path = match name {
        "best" | "last" => output_dir.join(format!("{name}.snnc")),
        other => PathBuf::from(other),
    };
    if !path.is_file() {
        return Err(usage(format!("checkpoint {} not found", path.display())));
    }
    Ok(path)
}

fn load_split(manifest: &DatasetManifest, split: &str) -> Result<Dataset, Failure> {
    let s: Split = split.parse().map_err(usage)?;
    manifest
        .load_split(s)?
        .ok_or_else(|| usage(format!("manifest has no {split} split")))
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let Resolved { cfg, output_dir } = resolve_run(&args.run, &[])?;
    let ckpt = resolve_checkpoint(&args.checkpoint, &output_dir)?;
    let manifest = load_manifest(&cfg)?;
    let ds = load_split(&manifest, &args.split)?;
    let mut net = checkpoint::load(&ckpt)?;
    check_dataset(&ds, &net.config, &args.split)?;
    if args.round_delays {
        net.round_delays();
    }
    let ev = evaluate(&net, &ds, cfg.train.batch_size, seed::derive(cfg.train.seed, stream::EVAL, 0, 0))?;
    println!(
        "{} accuracy {:.4} loss {:.4} samples {} spikes/neuron {:.3}",
        args.split,
        ev.accuracy,
        ev.loss,
        ev.samples,
        ev.mean_spikes_per_neuron(&net)
    );
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> CmdResult {
    if args.seeds == 0 || args.hidden.is_empty() || args.classes == 0 || args.timesteps == 0 {
        return Err(usage("seeds, hidden widths, classes and timesteps must be positive"));
    }
    let mut all_passed = true;
    for s in args.seed..args.seed + args.seeds {
        let cfg = GradcheckConfig {
            seed: s,
            input_channels: args.input,
            hidden: args.hidden.clone(),
            classes: args.classes,
            timesteps: args.timesteps,
            batch: args.batch,
            max_delay: args.max_delay,
            epsilon: args.epsilon,
            stencil: args.stencil.parse().map_err(usage)?,
            tolerance: args.tolerance,
            soft_beta: args.soft_beta,
            weight_scale: args.weight_scale,
            corrupt: args.corrupt,
            ..GradcheckConfig::default()
        };
        let report = gradcheck(&cfg).map_err(|e| match e {
            Error::Config(_) | Error::InvalidArgument(_) => usage(e),
            other => other.into(),
        })?;
        print!("{}", report.render());
        all_passed &= report.passed();
    }
    if all_passed {
        println!("gradcheck passed");
        Ok(())
    } else {
        Err(Failure::Runtime("gradcheck failed: relative error above tolerance".into()))
    }
}

fn cmd_regime_map(args: RegimeMapArgs) -> CmdResult {
    let spec = match &args.spec {
        Some(p) if !p.is_file() => return Err(usage(format!("spec {} not found", p.display()))),
        Some(p) => RegimeMapSpec::load(p).map_err(usage)?,
        None => RegimeMapSpec::canonical(),
    };
    let map = regime_map(&spec)?;
    let out_dir = resolve_output(args.output_root.as_deref(), &args.output_dir);
    let out = match args.out {
        Some(p) => resolve_output(args.output_root.as_deref(), &p),
        None => out_dir.join("regime_map.csv"),
    };
    io::atomic_write(&out, map.to_csv().as_bytes())?;
    let findings = map.monotonicity_findings();
    let max = map.counts.iter().max().copied().unwrap_or(0);
    println!(
        "{} grid points, {} input spikes, max output {max}, {} monotonicity findings; wrote {}",
        map.counts.len(),
        spec.input_spike_count(),
        findings.len(),
        out.display()
    );
    for f in &findings {
        println!(
            "finding: a={} count rises from {} at b={} to {} at b={}",
            f.a, f.count_low, f.b_low, f.count_high, f.b_high
        );
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> CmdResult {
    let Resolved { cfg, output_dir } = resolve_run(&args.run, &[])?;
    let ckpt = resolve_checkpoint(&args.checkpoint, &output_dir)?;
    let ds = if args.distributions_only {
        None
    } else {
        let manifest = load_manifest(&cfg)?;
        Some(load_split(&manifest, &args.split)?)
    };
    let net = checkpoint::load(&ckpt)?;
    let dist_dir = output_dir.join("distributions");
    let files = export_distributions(&net, &dist_dir)?;
    println!("wrote {} distribution files to {}", files.len(), dist_dir.display());
    if let Some(ds) = ds {
        check_dataset(&ds, &net.config, &args.split)?;
        let stats = spike_stats(&net, &ds, cfg.train.batch_size, seed::derive(cfg.train.seed, stream::EVAL, 0, 0))?;
        let path = output_dir.join("spike_stats.csv");
        io::atomic_write(&path, stats.to_csv().as_bytes())?;
        for (l, s) in stats.layers.iter().enumerate() {
            println!(
                "layer {l}: {} spikes, {} neurons, {} samples, {:.3} spikes/neuron",
                s.total_spikes,
                s.neurons,
                s.samples,
                s.spikes_per_neuron()
            );
        }
    }
    Ok(())
}

fn cmd_bin_data(args: BinDataArgs) -> CmdResult {
    if !args.input.is_file() {
        return Err(usage(format!("event file {} not found", args.input.display())));
    }
    let file = data::parse_events(&args.input)?;
    let header = file
        .header
        .ok_or_else(|| Failure::Runtime(format!("{} has no header", args.input.display())))?;
    let spec = BinSpec {
        raw_channels: header.raw_channels,
        channel_factor: args.channel_factor,
        bin_width: args.bin_width,
        timesteps: args.timesteps,
        binarize: args.binarize,
    };
    spec.validate().map_err(usage)?;
    let ds = data::bin_events(&file, &spec)?;
    data::write_binned(&args.output, &ds)?;
    let in_range = file.events.iter().filter(|e| spec.time_bin(e.time).is_some()).count();
    let total: f64 = ds.samples.iter().flat_map(|s| &s.values).sum();
    println!(
        "{} samples, {} events ({} in range), binned sum {}, {}x{} grid; wrote {}",
        ds.len(),
        file.events.len(),
        in_range,
        total,
        ds.timesteps,
        ds.channels,
        args.output.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::RegimeMap(a) => cmd_regime_map(a),
        Command::Stats(a) => cmd_stats(a),
        Command::BinData(a) => cmd_bin_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
