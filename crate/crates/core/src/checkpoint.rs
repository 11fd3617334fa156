//! Model checkpoint container.
//!
//! Little-endian layout, in order:
//!
//! | field | type |
//! |---|---|
//! | magic `SNNC` | 4 bytes |
//! | version (1) | u32 |
//! | config length | u32 |
//! | network config, TOML | UTF-8 bytes |
//! | synapse set count | u32 |
//! | per set: pre, post | u32, u32 |
//! | per set: weights (pre-major), bias, delays (pre-major) | f64 arrays |
//! | hidden layer count | u32 |
//! | per layer: neuron count | u32 |
//! | per layer: alpha, beta, a, b | f64 arrays |
//!
//! Files are written to a temporary sibling and renamed into place.

use std::path::Path;

use crate::delay::DelayMatrix;
use crate::error::{Error, Result};
use crate::io;
use crate::network::{Network, NetworkConfig, SynapseSet};
use crate::neuron::NeuronParams;

pub const MAGIC: &[u8; 4] = b"SNNC";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode(net: &Network) -> Result<Vec<u8>> {
    let config = toml::to_string(&net.config).map_err(|e| Error::Format {
        kind: "checkpoint",
        message: format!("cannot serialize config: {e}"),
    })?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize);
    put_u32(&mut out, config.len());
    out.extend_from_slice(config.as_bytes());
    put_u32(&mut out, net.synapses.len());
    for s in &net.synapses {
        put_u32(&mut out, s.pre);
        put_u32(&mut out, s.post);
        put_f64s(&mut out, &s.weights);
        put_f64s(&mut out, &s.bias);
        put_f64s(&mut out, &s.delays.d);
    }
    put_u32(&mut out, net.neurons.len());
    for p in &net.neurons {
        put_u32(&mut out, p.len());
        for xs in [&p.alpha, &p.beta, &p.a, &p.b] {
            put_f64s(&mut out, xs);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Format {
            kind: "checkpoint",
            message: format!("truncated at byte {}", self.pos),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format {
            kind: "checkpoint",
            message: "array length overflows".into(),
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    let bad = |message: String| Error::Format {
        kind: "checkpoint",
        message,
    };
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("missing SNNC magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = r.u32()?;
    let text = std::str::from_utf8(r.take(len)?).map_err(|_| bad("config is not UTF-8".into()))?;
    let config: NetworkConfig = toml::from_str(text).map_err(|e| bad(format!("bad config: {e}")))?;
    let n_syn = r.u32()?;
    let mut synapses = Vec::with_capacity(n_syn.min(64));
    for _ in 0..n_syn {
        let (pre, post) = (r.u32()?, r.u32()?);
        let weights = r.f64s(pre * post)?;
        let bias = r.f64s(post)?;
        let delays = DelayMatrix::from_values(pre, post, r.f64s(pre * post)?, config.max_delay)?;
        synapses.push(SynapseSet {
            pre,
            post,
            weights,
            bias,
            delays,
        });
    }
    let n_layers = r.u32()?;
    let mut neurons = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        let n = r.u32()?;
        neurons.push(NeuronParams {
            alpha: r.f64s(n)?,
            beta: r.f64s(n)?,
            a: r.f64s(n)?,
            b: r.f64s(n)?,
        });
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let net = Network {
        config,
        synapses,
        neurons,
    };
    net.validate()?;
    Ok(net)
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    io::atomic_write(path, &encode(net)?)
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    decode(&io::read(path)?)
}
