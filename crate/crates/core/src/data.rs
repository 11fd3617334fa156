//! Dataset ingestion: event text files, time/channel binning, the binned
//! tensor container, manifests, splits and mini-batches.
//!
//! Event file (UTF-8):
//!
//! ```text
//! #snnevt v1 raw_channels=700 classes=20
//! sample_id,label,channel,time_seconds
//! ...
//! ```
//!
//! Binned tensor file (little-endian): magic `SNNB`, `u32` version (1),
//! `u32` sample count, `u32` timesteps, `u32` channels, then per sample a
//! `u32` label followed by `timesteps * channels` `f32` values, row-major by
//! time.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::io;
use crate::seed;

pub const EVENT_MAGIC: &str = "#snnevt";
pub const BINNED_MAGIC: &[u8; 4] = b"SNNB";
pub const BINNED_VERSION: u32 = 1;

/// Batched real-valued input, `batch x timesteps x channels` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTensor {
    pub batch: usize,
    pub timesteps: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl SpikeTensor {
    pub fn zeros(batch: usize, timesteps: usize, channels: usize) -> Self {
        SpikeTensor {
            batch,
            timesteps,
            channels,
            values: vec![0.0; batch * timesteps * channels],
        }
    }

    pub fn sample_len(&self) -> usize {
        self.timesteps * self.channels
    }

    pub fn sample(&self, b: usize) -> &[f64] {
        let n = self.sample_len();
        &self.values[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.sample_len();
        &mut self.values[b * n..(b + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub sample_id: u64,
    pub label: usize,
    pub channel: usize,
    /// Seconds from sample onset.
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventHeader {
    pub raw_channels: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventFile {
    /// Absent only for a completely empty file.
    pub header: Option<EventHeader>,
    pub events: Vec<EventRecord>,
}

fn parse_header(line: &str, name: &str) -> Result<EventHeader> {
    let err = |message: String| Error::Parse {
        path: name.to_string(),
        line: 1,
        message,
    };
    let mut parts = line.split_whitespace();
    if parts.next() != Some(EVENT_MAGIC) {
        return Err(err(format!("expected header starting with {EVENT_MAGIC}")));
    }
    if parts.next() != Some("v1") {
        return Err(err("unsupported event format version".into()));
    }
    let (mut raw_channels, mut classes) = (None, None);
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| err(format!("bad header field {kv:?}")))?;
        let v: usize = v.parse().map_err(|_| err(format!("bad value in {kv:?}")))?;
        match k {
            "raw_channels" => raw_channels = Some(v),
            "classes" => classes = Some(v),
            _ => return Err(err(format!("unknown header field {k:?}"))),
        }
    }
    match (raw_channels, classes) {
        (Some(r), Some(c)) if r > 0 && c > 0 => Ok(EventHeader {
            raw_channels: r,
            classes: c,
        }),
        _ => Err(err("header needs positive raw_channels and classes".into())),
    }
}

/// Parse an event stream line by line. `name` is only used in error messages.
pub fn parse_events_from<R: BufRead>(reader: R, name: &str) -> Result<EventFile> {
    let mut header = None;
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(name, e))?;
        let line = line.trim();
        if header.is_none() {
            if line.is_empty() {
                continue;
            }
            header = Some(parse_header(line, name)?);
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let h = header.unwrap();
        let err = |message: String| Error::Parse {
            path: name.to_string(),
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let sample_id: u64 = fields[0].parse().map_err(|_| err("bad sample id".into()))?;
        let label: usize = fields[1].parse().map_err(|_| err("bad label".into()))?;
        let channel: usize = fields[2].parse().map_err(|_| err("bad channel".into()))?;
        let time: f64 = fields[3].parse().map_err(|_| err("bad time".into()))?;
        if label >= h.classes {
            return Err(err(format!("label {label} outside [0, {})", h.classes)));
        }
        if channel >= h.raw_channels {
            return Err(err(format!("channel {channel} outside [0, {})", h.raw_channels)));
        }
        if !time.is_finite() || time < 0.0 {
            return Err(err(format!("time {time} must be finite and non-negative")));
        }
        events.push(EventRecord {
            sample_id,
            label,
            channel,
            time,
        });
    }
    Ok(EventFile { header, events })
}

pub fn parse_events(path: impl AsRef<Path>) -> Result<EventFile> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_events_from(BufReader::new(f), &path.display().to_string())
}

pub fn format_events(file: &EventFile) -> Result<String> {
    let h = file
        .header
        .ok_or_else(|| Error::InvalidArgument("event file needs a header to be written".into()))?;
    let mut out = format!(
        "{EVENT_MAGIC} v1 raw_channels={} classes={}\n",
        h.raw_channels, h.classes
    );
    for e in &file.events {
        out.push_str(&format!("{},{},{},{}\n", e.sample_id, e.label, e.channel, e.time));
    }
    Ok(out)
}

pub fn write_events(path: impl AsRef<Path>, file: &EventFile) -> Result<()> {
    io::atomic_write(path, format_events(file)?.as_bytes())
}

/// Binning geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSpec {
    pub raw_channels: usize,
    pub channel_factor: usize,
    pub bin_width: f64,
    pub timesteps: usize,
    /// Saturate each cell at 1 instead of counting events.
    pub binarize: bool,
}

impl Default for BinSpec {
    fn default() -> Self {
        BinSpec {
            raw_channels: 700,
            channel_factor: 5,
            bin_width: 0.01,
            timesteps: 100,
            binarize: false,
        }
    }
}

impl BinSpec {
    pub fn channels(&self) -> usize {
        self.raw_channels / self.channel_factor
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_factor == 0 || self.raw_channels % self.channel_factor != 0 {
            return Err(Error::Config(format!(
                "channel factor {} must divide raw channel count {}",
                self.channel_factor, self.raw_channels
            )));
        }
        if !(self.bin_width > 0.0) || self.timesteps == 0 {
            return Err(Error::Config("bin width and timesteps must be positive".into()));
        }
        Ok(())
    }

    /// Half-open time bin of an event; `None` past the last bin. Values
    /// within 1e-9 bins of an integer snap to it, so decimal times sitting on
    /// a boundary (0.03 s with 10 ms bins) land in the bin they start.
    pub fn time_bin(&self, time: f64) -> Option<usize> {
        let x = time / self.bin_width;
        let r = x.round();
        let bin = if (x - r).abs() < 1e-9 { r } else { x.floor() };
        (bin >= 0.0 && bin < self.timesteps as f64).then_some(bin as usize)
    }
}

/// Bin one sample's events into a `timesteps x channels` grid.
pub fn bin_sample(events: &[EventRecord], spec: &BinSpec) -> Vec<f64> {
    let channels = spec.channels();
    let mut grid = vec![0.0; spec.timesteps * channels];
    for e in events {
        let c = e.channel / spec.channel_factor;
        if c >= channels {
            continue;
        }
        if let Some(t) = spec.time_bin(e.time) {
            let cell = &mut grid[t * channels + c];
            if spec.binarize {
                *cell = 1.0;
            } else {
                *cell += 1.0;
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: usize,
    /// `timesteps x channels`, row-major by time.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub timesteps: usize,
    pub channels: usize,
    pub classes: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            ..*self.header_only()
        }
    }

    fn header_only(&self) -> Box<Dataset> {
        Box::new(Dataset {
            timesteps: self.timesteps,
            channels: self.channels,
            classes: self.classes,
            samples: Vec::new(),
        })
    }

    /// Gather the given samples into one tensor.
    pub fn tensor(&self, indices: &[usize]) -> (SpikeTensor, Vec<usize>) {
        let mut t = SpikeTensor::zeros(indices.len(), self.timesteps, self.channels);
        let mut labels = Vec::with_capacity(indices.len());
        for (b, &i) in indices.iter().enumerate() {
            t.sample_mut(b).copy_from_slice(&self.samples[i].values);
            labels.push(self.samples[i].label);
        }
        (t, labels)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.values.len() != self.timesteps * self.channels {
                return Err(Error::Format {
                    kind: "dataset",
                    message: format!("sample {i} has {} values", s.values.len()),
                });
            }
            if s.label >= self.classes {
                return Err(Error::Format {
                    kind: "dataset",
                    message: format!("sample {i} label {} >= classes {}", s.label, self.classes),
                });
            }
            if s.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Format {
                    kind: "dataset",
                    message: format!("sample {i} has negative or non-finite values"),
                });
            }
        }
        Ok(())
    }
}

/// Group events by sample id (ascending) and bin each sample.
pub fn bin_events(file: &EventFile, spec: &BinSpec) -> Result<Dataset> {
    spec.validate()?;
    let classes = match file.header {
        Some(h) => {
            if h.raw_channels != spec.raw_channels {
                return Err(Error::Config(format!(
                    "event file has {} raw channels, binning expects {}",
                    h.raw_channels, spec.raw_channels
                )));
            }
            h.classes
        }
        None => 0,
    };
    let mut groups: BTreeMap<u64, (usize, Vec<EventRecord>)> = BTreeMap::new();
    for e in &file.events {
        let entry = groups.entry(e.sample_id).or_insert_with(|| (e.label, Vec::new()));
        if entry.0 != e.label {
            return Err(Error::Format {
                kind: "event",
                message: format!("sample {} carries labels {} and {}", e.sample_id, entry.0, e.label),
            });
        }
        entry.1.push(e.clone());
    }
    let samples = groups
        .into_values()
        .map(|(label, evs)| Sample {
            label,
            values: bin_sample(&evs, spec),
        })
        .collect();
    Ok(Dataset {
        timesteps: spec.timesteps,
        channels: spec.channels(),
        classes,
        samples,
    })
}

pub fn encode_binned(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + ds.len() * (4 + 4 * ds.timesteps * ds.channels));
    out.extend_from_slice(BINNED_MAGIC);
    for v in [BINNED_VERSION, ds.len() as u32, ds.timesteps as u32, ds.channels as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in &ds.samples {
        out.extend_from_slice(&(s.label as u32).to_le_bytes());
        for &v in &s.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Decode a binned tensor file. Class count is taken as `max label + 1`
/// unless the caller knows better.
pub fn decode_binned(bytes: &[u8], classes: Option<usize>) -> Result<Dataset> {
    let bad = |message: String| Error::Format {
        kind: "binned tensor",
        message,
    };
    if bytes.len() < 20 || &bytes[..4] != BINNED_MAGIC {
        return Err(bad("missing SNNB magic".into()));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != BINNED_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let (n, timesteps, channels) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
    let per_sample = 4 + 4 * timesteps * channels;
    if bytes.len() != 20 + n * per_sample {
        return Err(bad(format!(
            "expected {} bytes for {n} samples, found {}",
            20 + n * per_sample,
            bytes.len()
        )));
    }
    let mut samples = Vec::with_capacity(n);
    for s in 0..n {
        let off = 20 + s * per_sample;
        let label = u32_at(off) as usize;
        let values = bytes[off + 4..off + per_sample]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        samples.push(Sample { label, values });
    }
    let max_label = samples.iter().map(|s| s.label + 1).max().unwrap_or(0);
    let ds = Dataset {
        timesteps,
        channels,
        classes: classes.unwrap_or(max_label).max(max_label),
        samples,
    };
    if let Some(c) = classes {
        if max_label > c {
            return Err(bad(format!("label {} outside {c} classes", max_label - 1)));
        }
    }
    ds.validate()?;
    Ok(ds)
}

pub fn write_binned(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    io::atomic_write(path, &encode_binned(ds))
}

pub fn read_binned(path: impl AsRef<Path>, classes: Option<usize>) -> Result<Dataset> {
    decode_binned(&io::read(path)?, classes)
}

/// Batches of sample indices. With a seed the order is a seeded shuffle,
/// without one the input order is kept. The last partial batch is kept.
pub fn batch_indices(n: usize, batch_size: usize, shuffle_seed: Option<u64>) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    if let Some(s) = shuffle_seed {
        idx.shuffle(&mut seed::rng(s));
    }
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

pub fn make_batches(
    ds: &Dataset,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Vec<(SpikeTensor, Vec<usize>)> {
    batch_indices(ds.len(), batch_size, shuffle_seed)
        .iter()
        .map(|b| ds.tensor(b))
        .collect()
}

/// Disjoint seeded split; the validation part holds `round(fraction * n)`
/// samples.
pub fn split_validation(ds: &Dataset, fraction: f64, seed_value: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {fraction} outside (0, 1)"
        )));
    }
    let (train, valid) = split_indices(ds.len(), fraction, seed_value);
    Ok((ds.subset(&train), ds.subset(&valid)))
}

pub fn split_indices(n: usize, fraction: f64, seed_value: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed_value));
    let n_valid = (fraction * n as f64).round() as usize;
    let mut valid = idx[..n_valid].to_vec();
    let mut train = idx[n_valid..].to_vec();
    valid.sort_unstable();
    train.sort_unstable();
    (train, valid)
}

/// Key-value file describing where a dataset lives and how to bin it.
///
/// ```text
/// train = shd_train.evt      # event text or SNNB file
/// valid = shd_valid.snnb     # optional
/// test = shd_test.snnb       # optional
/// classes = 20
/// raw_channels = 700
/// channel_factor = 5
/// bin_width = 0.01
/// timesteps = 100
/// binarize = false
/// ```
///
/// Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub train: PathBuf,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub classes: Option<usize>,
    pub bins: BinSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split {s:?}"))),
        }
    }
}

impl DatasetManifest {
    pub fn parse(text: &str, base: &Path, name: &str) -> Result<Self> {
        let mut train = None;
        let mut valid = None;
        let mut test = None;
        let mut classes = None;
        let mut bins = BinSpec::default();
        for (idx, raw) in text.lines().enumerate() {
            let err = |message: String| Error::Parse {
                path: name.to_string(),
                line: idx + 1,
                message,
            };
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected key = value".into()))?;
            let (k, v) = (k.trim(), v.trim().trim_matches('"'));
            let num = |v: &str| -> Result<usize> { v.parse().map_err(|_| err(format!("bad number for {k}"))) };
            match k {
                "train" => train = Some(base.join(v)),
                "valid" => valid = Some(base.join(v)),
                "test" => test = Some(base.join(v)),
                "classes" => classes = Some(num(v)?),
                "raw_channels" => bins.raw_channels = num(v)?,
                "channel_factor" => bins.channel_factor = num(v)?,
                "timesteps" => bins.timesteps = num(v)?,
                "bin_width" => {
                    bins.bin_width = v.parse().map_err(|_| err("bad bin_width".into()))?
                }
                "binarize" => bins.binarize = v.parse().map_err(|_| err("bad binarize".into()))?,
                _ => return Err(err(format!("unknown key {k:?}"))),
            }
        }
        let train = train.ok_or_else(|| Error::Config(format!("{name}: manifest has no train entry")))?;
        bins.validate()?;
        Ok(DatasetManifest {
            train,
            valid,
            test,
            classes,
            bins,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = io::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, &path.display().to_string())
    }

    pub fn path(&self, split: Split) -> Option<&Path> {
        match split {
            Split::Train => Some(&self.train),
            Split::Valid => self.valid.as_deref(),
            Split::Test => self.test.as_deref(),
        }
    }

    /// Every referenced file must exist.
    pub fn check_files(&self) -> Result<()> {
        for p in [Some(&self.train), self.valid.as_ref(), self.test.as_ref()]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(Error::Config(format!("dataset file {} not found", p.display())));
            }
        }
        Ok(())
    }

    /// Load a split, binning event files on the fly.
    pub fn load_split(&self, split: Split) -> Result<Option<Dataset>> {
        let Some(path) = self.path(split) else {
            return Ok(None);
        };
        load_dataset_file(path, &self.bins, self.classes).map(Some)
    }
}

/// Load either a binned tensor file or an event text file.
pub fn load_dataset_file(path: &Path, bins: &BinSpec, classes: Option<usize>) -> Result<Dataset> {
    let bytes = io::read(path)?;
    let mut ds = if bytes.starts_with(BINNED_MAGIC) {
        decode_binned(&bytes, classes)?
    } else {
        let file = parse_events_from(&bytes[..], &path.display().to_string())?;
        let mut ds = bin_events(&file, bins)?;
        if let Some(c) = classes {
            if ds.classes > c {
                return Err(Error::Config(format!(
                    "event file declares {} classes, manifest {c}",
                    ds.classes
                )));
            }
            ds.classes = c;
        }
        ds
    };
    if let Some(c) = classes {
        ds.classes = c;
    }
    ds.validate()?;
    Ok(ds)
}

/// Write a summary line per sample (label and event count) for debugging.
pub fn describe(ds: &Dataset, mut w: impl std::io::Write) -> std::io::Result<()> {
    for (i, s) in ds.samples.iter().enumerate() {
        writeln!(w, "{i},{},{}", s.label, s.values.iter().sum::<f64>())?;
    }
    Ok(())
}
