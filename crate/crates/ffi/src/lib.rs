//! C ABI over the `adlif` engine.
//!
//! Every function returns an [`AdlifStatus`]; on failure the message is kept
//! per thread and read with [`adlif_last_error`]. Networks and datasets are
//! opaque handles released with their `_free` function. Panics never cross
//! the boundary and surface as [`AdlifStatus::Panic`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use adlif::analysis;
use adlif::checkpoint;
use adlif::data::{self, BinSpec, Dataset, SpikeTensor};
use adlif::training::{evaluate, loss};
use adlif::{network_forward, Error, Mode, Network};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdlifStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Parse = 5,
    Format = 6,
    Config = 7,
    NonFinite = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Trained network.
pub struct AdlifNetwork(Network);

/// Binned dataset held in memory.
pub struct AdlifDataset(Dataset);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(AdlifStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape { .. } => AdlifStatus::Shape,
            Error::NonFinite { .. } => AdlifStatus::NonFinite,
            Error::InvalidArgument(_) => AdlifStatus::InvalidArgument,
            Error::Parse { .. } => AdlifStatus::Parse,
            Error::Format { .. } => AdlifStatus::Format,
            Error::Config(_) => AdlifStatus::Config,
            Error::Io { .. } => AdlifStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AdlifStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AdlifStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AdlifStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            AdlifStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(AdlifStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len < need {
        return Err(Failure(
            AdlifStatus::BufferTooSmall,
            format!("{what} holds {len} values, need {need}"),
        ));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts_mut(p, need) })
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn adlif_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn adlif_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a checkpoint written by `adlif train`.
#[no_mangle]
pub unsafe extern "C" fn adlif_network_load(path: *const c_char, out_net: *mut *mut AdlifNetwork) -> AdlifStatus {
    guard(|| {
        let path = unsafe { path_arg(path, "path") }?;
        let slot = unsafe { out(out_net, "out_net") }?;
        let net = checkpoint::load(path)?;
        *slot = Box::into_raw(Box::new(AdlifNetwork(net)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn adlif_network_save(net: *const AdlifNetwork, path: *const c_char) -> AdlifStatus {
    guard(|| {
        let net = unsafe { net.as_ref() }.ok_or_else(|| null("net"))?;
        let path = unsafe { path_arg(path, "path") }?;
        checkpoint::save(&net.0, path)?;
        Ok(())
    })
}

/// Release a network. Null is accepted.
#[no_mangle]
pub unsafe extern "C" fn adlif_network_free(net: *mut AdlifNetwork) {
    if !net.is_null() {
        drop(unsafe { Box::from_raw(net) });
    }
}

/// Input channels, class count and number of hidden layers.
#[no_mangle]
pub unsafe extern "C" fn adlif_network_shape(
    net: *const AdlifNetwork,
    input_channels: *mut usize,
    classes: *mut usize,
    hidden_layers: *mut usize,
) -> AdlifStatus {
    guard(|| {
        let net = unsafe { net.as_ref() }.ok_or_else(|| null("net"))?;
        *unsafe { out(input_channels, "input_channels") }? = net.0.config.input_channels;
        *unsafe { out(classes, "classes") }? = net.0.config.classes;
        *unsafe { out(hidden_layers, "hidden_layers") }? = net.0.config.hidden.len();
        Ok(())
    })
}

/// Width of hidden layer `layer`.
#[no_mangle]
pub unsafe extern "C" fn adlif_network_hidden_width(
    net: *const AdlifNetwork,
    layer: usize,
    width: *mut usize,
) -> AdlifStatus {
    guard(|| {
        let net = unsafe { net.as_ref() }.ok_or_else(|| null("net"))?;
        let w = net.0.config.hidden.get(layer).ok_or_else(|| {
            Failure(AdlifStatus::InvalidArgument, format!("no hidden layer {layer}"))
        })?;
        *unsafe { out(width, "width") }? = *w;
        Ok(())
    })
}

/// Eval-mode forward pass over `batch` samples laid out as
/// `batch x timesteps x channels`, row-major. Writes `batch x classes`
/// scores; `seed` drives the initial neuron state.
#[no_mangle]
pub unsafe extern "C" fn adlif_network_forward(
    net: *const AdlifNetwork,
    input: *const f64,
    batch: usize,
    timesteps: usize,
    channels: usize,
    seed: u64,
    scores: *mut f64,
    scores_len: usize,
) -> AdlifStatus {
    guard(|| {
        let net = unsafe { net.as_ref() }.ok_or_else(|| null("net"))?;
        let len = batch
            .checked_mul(timesteps)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Failure(AdlifStatus::InvalidArgument, "input size overflows".into()))?;
        let values = unsafe { slice(input, len, "input") }?.to_vec();
        let dst = unsafe { slice_mut(scores, scores_len, batch * net.0.config.classes, "scores") }?;
        let x = SpikeTensor {
            batch,
            timesteps,
            channels,
            values,
        };
        let res = network_forward(&net.0, &x, Mode::Eval, seed)?;
        for (row, s) in dst.chunks_mut(net.0.config.classes).zip(&res.scores) {
            row.copy_from_slice(s);
        }
        Ok(())
    })
}

/// Accuracy and mean loss of `net` on a whole dataset.
#[no_mangle]
pub unsafe extern "C" fn adlif_network_evaluate(
    net: *const AdlifNetwork,
    dataset: *const AdlifDataset,
    batch_size: usize,
    seed: u64,
    accuracy: *mut f64,
    mean_loss: *mut f64,
) -> AdlifStatus {
    guard(|| {
        let net = unsafe { net.as_ref() }.ok_or_else(|| null("net"))?;
        let ds = unsafe { dataset.as_ref() }.ok_or_else(|| null("dataset"))?;
        let acc = unsafe { out(accuracy, "accuracy") }?;
        let l = unsafe { out(mean_loss, "mean_loss") }?;
        let ev = evaluate(&net.0, &ds.0, batch_size.max(1), seed)?;
        *acc = ev.accuracy;
        *l = ev.loss;
        Ok(())
    })
}

/// Mean cross-entropy of `batch x classes` scores against `labels`.
#[no_mangle]
pub unsafe extern "C" fn adlif_loss(
    scores: *const f64,
    batch: usize,
    classes: usize,
    labels: *const usize,
    value: *mut f64,
) -> AdlifStatus {
    guard(|| {
        let flat = unsafe { slice(scores, batch * classes, "scores") }?;
        if batch > 0 && labels.is_null() {
            return Err(null("labels"));
        }
        let labels = if batch == 0 { &[][..] } else { unsafe { std::slice::from_raw_parts(labels, batch) } };
        let rows: Vec<Vec<f64>> = flat.chunks(classes.max(1)).map(<[f64]>::to_vec).collect();
        *unsafe { out(value, "value") }? = loss(&rows, labels)?;
        Ok(())
    })
}

/// Load a binned (`SNNB`) file or a text event file binned with the default
/// settings. `classes` of 0 takes the count from the file.
#[no_mangle]
pub unsafe extern "C" fn adlif_dataset_load(
    path: *const c_char,
    classes: usize,
    out_dataset: *mut *mut AdlifDataset,
) -> AdlifStatus {
    guard(|| {
        let path = unsafe { path_arg(path, "path") }?;
        let slot = unsafe { out(out_dataset, "out_dataset") }?;
        let classes = (classes > 0).then_some(classes);
        let ds = data::load_dataset_file(&path, &BinSpec::default(), classes)?;
        *slot = Box::into_raw(Box::new(AdlifDataset(ds)));
        Ok(())
    })
}

/// Bin a text event file into a dataset handle. The raw channel count comes
/// from the file header.
#[no_mangle]
pub unsafe extern "C" fn adlif_bin_events(
    path: *const c_char,
    channel_factor: usize,
    bin_width: f64,
    timesteps: usize,
    binarize: bool,
    out_dataset: *mut *mut AdlifDataset,
) -> AdlifStatus {
    guard(|| {
        let path = unsafe { path_arg(path, "path") }?;
        let slot = unsafe { out(out_dataset, "out_dataset") }?;
        let file = data::parse_events(&path)?;
        let spec = BinSpec {
            raw_channels: file.header.map_or(BinSpec::default().raw_channels, |h| h.raw_channels),
            channel_factor,
            bin_width,
            timesteps,
            binarize,
        };
        let ds = data::bin_events(&file, &spec)?;
        *slot = Box::into_raw(Box::new(AdlifDataset(ds)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn adlif_dataset_save(dataset: *const AdlifDataset, path: *const c_char) -> AdlifStatus {
    guard(|| {
        let ds = unsafe { dataset.as_ref() }.ok_or_else(|| null("dataset"))?;
        let path = unsafe { path_arg(path, "path") }?;
        data::write_binned(path, &ds.0)?;
        Ok(())
    })
}

/// Release a dataset. Null is accepted.
#[no_mangle]
pub unsafe extern "C" fn adlif_dataset_free(dataset: *mut AdlifDataset) {
    if !dataset.is_null() {
        drop(unsafe { Box::from_raw(dataset) });
    }
}

#[no_mangle]
pub unsafe extern "C" fn adlif_dataset_info(
    dataset: *const AdlifDataset,
    samples: *mut usize,
    timesteps: *mut usize,
    channels: *mut usize,
    classes: *mut usize,
) -> AdlifStatus {
    guard(|| {
        let ds = unsafe { dataset.as_ref() }.ok_or_else(|| null("dataset"))?;
        *unsafe { out(samples, "samples") }? = ds.0.len();
        *unsafe { out(timesteps, "timesteps") }? = ds.0.timesteps;
        *unsafe { out(channels, "channels") }? = ds.0.channels;
        *unsafe { out(classes, "classes") }? = ds.0.classes;
        Ok(())
    })
}

/// Copy sample `index` (`timesteps x channels`) into `values`.
#[no_mangle]
pub unsafe extern "C" fn adlif_dataset_sample(
    dataset: *const AdlifDataset,
    index: usize,
    label: *mut usize,
    values: *mut f64,
    values_len: usize,
) -> AdlifStatus {
    guard(|| {
        let ds = unsafe { dataset.as_ref() }.ok_or_else(|| null("dataset"))?;
        let s = ds.0.samples.get(index).ok_or_else(|| {
            Failure(
                AdlifStatus::InvalidArgument,
                format!("sample {index} out of range ({} samples)", ds.0.len()),
            )
        })?;
        let dst = unsafe { slice_mut(values, values_len, s.values.len(), "values") }?;
        dst.copy_from_slice(&s.values);
        *unsafe { out(label, "label") }? = s.label;
        Ok(())
    })
}

/// Output spike count of one adaptive neuron driven by `weight * stimulus`
/// from a zero state.
#[no_mangle]
pub unsafe extern "C" fn adlif_count_spikes(
    stimulus: *const f64,
    timesteps: usize,
    weight: f64,
    alpha: f64,
    beta: f64,
    a: f64,
    b: f64,
    theta: f64,
    count: *mut u32,
) -> AdlifStatus {
    guard(|| {
        let stim = unsafe { slice(stimulus, timesteps, "stimulus") }?;
        *unsafe { out(count, "count") }? = analysis::count_spikes(stim, weight, alpha, beta, a, b, theta);
        Ok(())
    })
}

/// Regime map over the default (a, b) grid, or the grid in the TOML file at
/// `spec_path` when it is not null. Counts are written a-major into
/// `counts`; the grid sizes go to `a_steps` and `b_steps`.
#[no_mangle]
pub unsafe extern "C" fn adlif_regime_map(
    spec_path: *const c_char,
    counts: *mut u32,
    counts_len: usize,
    a_steps: *mut usize,
    b_steps: *mut usize,
) -> AdlifStatus {
    guard(|| {
        let spec = if spec_path.is_null() {
            analysis::RegimeMapSpec::canonical()
        } else {
            analysis::RegimeMapSpec::load(unsafe { path_arg(spec_path, "spec_path") }?)?
        };
        let na = unsafe { out(a_steps, "a_steps") }?;
        let nb = unsafe { out(b_steps, "b_steps") }?;
        *na = spec.a_range.steps;
        *nb = spec.b_range.steps;
        let dst = unsafe { slice_mut(counts, counts_len, spec.a_range.steps * spec.b_range.steps, "counts") }?;
        let map = analysis::regime_map(&spec)?;
        dst.copy_from_slice(&map.counts);
        Ok(())
    })
}
