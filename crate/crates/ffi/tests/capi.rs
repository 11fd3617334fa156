use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use adlif::analysis::{count_spikes, RegimeMapSpec};
use adlif::data::{EventFile, EventHeader, EventRecord};
use adlif::{checkpoint, network_forward, Mode, Network, NetworkConfig};
use adlif_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> Option<String> {
    let p = adlif_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn small_net() -> Network {
    let cfg = NetworkConfig {
        input_channels: 6,
        hidden: vec![5, 4],
        classes: 3,
        max_delay: 4,
        ..NetworkConfig::default()
    };
    let mut net = Network::new(cfg, 11).unwrap();
    for (i, d) in net.synapses[0].delays.d.iter_mut().enumerate() {
        *d = (i % 7) as f64 * 0.55;
    }
    net
}

fn event_file(dir: &Path) -> (std::path::PathBuf, usize) {
    let mut events = Vec::new();
    for sid in 0..3u64 {
        for k in 0..40 {
            events.push(EventRecord {
                sample_id: sid,
                label: sid as usize,
                channel: (k * 13 + sid as usize) % 20,
                time: 0.003 * k as f64,
            });
        }
    }
    let file = EventFile {
        header: Some(EventHeader {
            raw_channels: 20,
            classes: 3,
        }),
        events,
    };
    let path = dir.join("events.evt");
    adlif::data::write_events(&path, &file).unwrap();
    (path, 120)
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(adlif_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn network_round_trip_and_forward() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.snnc");
    let net = small_net();
    checkpoint::save(&net, &path).unwrap();

    let mut handle: *mut AdlifNetwork = ptr::null_mut();
    assert_eq!(unsafe { adlif_network_load(cstr(&path).as_ptr(), &mut handle) }, AdlifStatus::Ok);
    assert!(!handle.is_null());
    assert_eq!(last_error(), None);

    let (mut inputs, mut classes, mut layers) = (0, 0, 0);
    let st = unsafe { adlif_network_shape(handle, &mut inputs, &mut classes, &mut layers) };
    assert_eq!(st, AdlifStatus::Ok);
    assert_eq!((inputs, classes, layers), (6, 3, 2));
    let mut width = 0;
    assert_eq!(unsafe { adlif_network_hidden_width(handle, 1, &mut width) }, AdlifStatus::Ok);
    assert_eq!(width, 4);
    assert_eq!(
        unsafe { adlif_network_hidden_width(handle, 2, &mut width) },
        AdlifStatus::InvalidArgument
    );
    assert!(last_error().unwrap().contains("hidden layer 2"));

    let (batch, t) = (2, 9);
    let x: Vec<f64> = (0..batch * t * 6).map(|i| ((i * 7) % 3 == 0) as u8 as f64).collect();
    let mut scores = vec![0.0; batch * 3];
    let st = unsafe { adlif_network_forward(handle, x.as_ptr(), batch, t, 6, 5, scores.as_mut_ptr(), scores.len()) };
    assert_eq!(st, AdlifStatus::Ok);
    let tensor = adlif::data::SpikeTensor {
        batch,
        timesteps: t,
        channels: 6,
        values: x.clone(),
    };
    let expected = network_forward(&net, &tensor, Mode::Eval, 5).unwrap();
    assert_eq!(scores, expected.scores.concat());

    let mut short = vec![0.0; 5];
    let st = unsafe { adlif_network_forward(handle, x.as_ptr(), batch, t, 6, 5, short.as_mut_ptr(), short.len()) };
    assert_eq!(st, AdlifStatus::BufferTooSmall);
    let st = unsafe { adlif_network_forward(handle, x.as_ptr(), batch, t, 5, 5, scores.as_mut_ptr(), scores.len()) };
    assert_eq!(st, AdlifStatus::Shape);

    let copy = dir.path().join("copy.snnc");
    assert_eq!(unsafe { adlif_network_save(handle, cstr(&copy).as_ptr()) }, AdlifStatus::Ok);
    assert_eq!(checkpoint::load(&copy).unwrap(), net);
    unsafe { adlif_network_free(handle) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut handle: *mut AdlifNetwork = ptr::null_mut();
    assert_eq!(unsafe { adlif_network_load(ptr::null(), &mut handle) }, AdlifStatus::NullPointer);
    assert!(last_error().unwrap().contains("path"));

    let missing = CString::new("/nonexistent/dir/net.snnc").unwrap();
    assert_eq!(unsafe { adlif_network_load(missing.as_ptr(), &mut handle) }, AdlifStatus::Io);
    assert!(handle.is_null());

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.snnc");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(unsafe { adlif_network_load(cstr(&junk).as_ptr(), &mut handle) }, AdlifStatus::Format);

    let (mut a, mut b, mut c) = (0, 0, 0);
    assert_eq!(
        unsafe { adlif_network_shape(ptr::null(), &mut a, &mut b, &mut c) },
        AdlifStatus::NullPointer
    );
    unsafe {
        adlif_network_free(ptr::null_mut());
        adlif_dataset_free(ptr::null_mut());
    }

    let mut count = 0;
    let stim = [1.0, 0.0];
    let st = unsafe { adlif_count_spikes(stim.as_ptr(), 2, 1.0, 0.9, 0.97, 0.0, 0.0, 1.0, &mut count) };
    assert_eq!(st, AdlifStatus::Ok);
    assert_eq!(last_error(), None);
}

#[test]
fn dataset_binning_and_access() {
    let dir = tempfile::tempdir().unwrap();
    let (path, n_events) = event_file(dir.path());
    let mut ds: *mut AdlifDataset = ptr::null_mut();
    let st = unsafe { adlif_bin_events(cstr(&path).as_ptr(), 5, 0.01, 20, false, &mut ds) };
    assert_eq!(st, AdlifStatus::Ok, "{:?}", last_error());

    let (mut n, mut t, mut ch, mut classes) = (0, 0, 0, 0);
    assert_eq!(unsafe { adlif_dataset_info(ds, &mut n, &mut t, &mut ch, &mut classes) }, AdlifStatus::Ok);
    assert_eq!((n, t, ch, classes), (3, 20, 4, 3));

    let mut total = 0.0;
    let mut values = vec![0.0; t * ch];
    for i in 0..n {
        let mut label = usize::MAX;
        let st = unsafe { adlif_dataset_sample(ds, i, &mut label, values.as_mut_ptr(), values.len()) };
        assert_eq!(st, AdlifStatus::Ok);
        assert_eq!(label, i);
        total += values.iter().sum::<f64>();
    }
    assert_eq!(total, n_events as f64);
    let mut label = 0;
    assert_eq!(
        unsafe { adlif_dataset_sample(ds, 3, &mut label, values.as_mut_ptr(), values.len()) },
        AdlifStatus::InvalidArgument
    );

    let binned = dir.path().join("ds.snnb");
    assert_eq!(unsafe { adlif_dataset_save(ds, cstr(&binned).as_ptr()) }, AdlifStatus::Ok);
    let mut back: *mut AdlifDataset = ptr::null_mut();
    assert_eq!(unsafe { adlif_dataset_load(cstr(&binned).as_ptr(), 0, &mut back) }, AdlifStatus::Ok);
    let (mut n2, mut t2, mut ch2, mut c2) = (0, 0, 0, 0);
    unsafe { adlif_dataset_info(back, &mut n2, &mut t2, &mut ch2, &mut c2) };
    assert_eq!((n2, t2, ch2, c2), (3, 20, 4, 3));

    let cfg = NetworkConfig {
        input_channels: 4,
        hidden: vec![6, 6],
        classes: 3,
        ..NetworkConfig::default()
    };
    let net_path = dir.path().join("n.snnc");
    checkpoint::save(&Network::new(cfg, 2).unwrap(), &net_path).unwrap();
    let mut net: *mut AdlifNetwork = ptr::null_mut();
    unsafe { adlif_network_load(cstr(&net_path).as_ptr(), &mut net) };
    let (mut acc, mut loss) = (-1.0, -1.0);
    let st = unsafe { adlif_network_evaluate(net, back, 2, 0, &mut acc, &mut loss) };
    assert_eq!(st, AdlifStatus::Ok);
    assert!((0.0..=1.0).contains(&acc));
    assert!(loss.is_finite() && loss > 0.0);

    unsafe {
        adlif_network_free(net);
        adlif_dataset_free(ds);
        adlif_dataset_free(back);
    }
}

#[test]
fn bad_binning_settings_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = event_file(dir.path());
    let mut ds: *mut AdlifDataset = ptr::null_mut();
    let st = unsafe { adlif_bin_events(cstr(&path).as_ptr(), 3, 0.01, 20, false, &mut ds) };
    assert_eq!(st, AdlifStatus::Config);
    assert!(ds.is_null());
}

#[test]
fn loss_matches_core() {
    let scores = [2.0, 0.5, -1.0, 0.1, 0.2, 0.3];
    let labels = [0usize, 2];
    let mut value = 0.0;
    let st = unsafe { adlif_loss(scores.as_ptr(), 2, 3, labels.as_ptr(), &mut value) };
    assert_eq!(st, AdlifStatus::Ok);
    let expected = adlif::training::loss(&[scores[..3].to_vec(), scores[3..].to_vec()], &labels).unwrap();
    assert_eq!(value, expected);
    let bad = [0usize, 3];
    assert_eq!(
        unsafe { adlif_loss(scores.as_ptr(), 2, 3, bad.as_ptr(), &mut value) },
        AdlifStatus::InvalidArgument
    );
}

#[test]
fn regime_map_and_single_neuron() {
    let spec = RegimeMapSpec::canonical();
    let stim = spec.stimulus();
    let mut count = 0;
    let st = unsafe {
        adlif_count_spikes(stim.as_ptr(), stim.len(), spec.input_weight, spec.alpha, spec.beta, 0.0, 0.0, spec.theta, &mut count)
    };
    assert_eq!(st, AdlifStatus::Ok);
    assert_eq!(count, count_spikes(&stim, spec.input_weight, spec.alpha, spec.beta, 0.0, 0.0, spec.theta));

    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("map.toml");
    std::fs::write(&small, "a_range = { min = 0.0, max = 1.0, steps = 3 }\nb_range = { min = 0.0, max = 2.0, steps = 2 }\n").unwrap();
    let (mut na, mut nb) = (0, 0);
    let mut tiny = [0u32; 2];
    let st = unsafe { adlif_regime_map(cstr(&small).as_ptr(), tiny.as_mut_ptr(), tiny.len(), &mut na, &mut nb) };
    assert_eq!(st, AdlifStatus::BufferTooSmall);
    assert_eq!((na, nb), (3, 2));
    let mut counts = [u32::MAX; 6];
    let st = unsafe { adlif_regime_map(cstr(&small).as_ptr(), counts.as_mut_ptr(), counts.len(), &mut na, &mut nb) };
    assert_eq!(st, AdlifStatus::Ok, "{:?}", last_error());
    assert_eq!(counts[0], count);
    assert!(counts.iter().all(|&c| c <= spec.input_spike_count() as u32));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/adlif.h")).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct AdlifNetwork AdlifNetwork;"));
    assert!(header.contains("ADLIF_STATUS_BUFFER_TOO_SMALL = 9"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/adlif.h");
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    assert!(status.success());
}
