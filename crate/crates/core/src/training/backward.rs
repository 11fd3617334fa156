//! Reverse-time sweep through a recorded forward pass.
//!
//! For a hidden layer with recurrence
//!
//! ```text
//! u[t] = alpha u[t-1] + (1 - alpha)(I[t] - w[t-1]) - theta s[t-1]
//! w[t] = beta w[t-1] + (1 - beta) a u[t-1] + b s[t-1]
//! s[t] = H(u[t] - theta)
//! ```
//!
//! the total adjoints `gu[t]`, `gw[t]`, `gs[t]` obey
//!
//! ```text
//! gs[t] = g_out[t] - theta gu[t+1] + b gw[t+1]
//! gu[t] = gs[t] H'(u[t]) + alpha gu[t+1] + (1 - beta) a gw[t+1]
//! gw[t] = -(1 - alpha) gu[t+1] + beta gw[t+1]
//! ```
//!
//! with `H'` the surrogate derivative. The two spike terms of `gs` can be
//! detached. Synapse adjoints are scattered back through the interpolated
//! delay taps onto the presynaptic timesteps they were read from.

use rayon::prelude::*;

use crate::delay::split_delay;
use crate::error::{ensure_len, Error, Result};
use crate::network::{softmax, LayerTrace, Network, ParamId, ReadoutMode, SampleRecord, SynapseSet};
use crate::network::ForwardRecord;
use crate::training::loss::loss_and_grad;

/// Gradients laid out exactly like [`Network::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub ids: Vec<ParamId>,
    pub values: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        let (ids, values) = net.tensors().into_iter().map(|(id, t)| (id, vec![0.0; t.len()])).unzip();
        Gradients { ids, values }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.ids.iter().position(|&i| i == id).map(|p| &self.values[p][..])
    }

    fn get_mut(&mut self, id: ParamId) -> &mut Vec<f64> {
        let p = self.ids.iter().position(|&i| i == id).expect("gradient slot exists");
        &mut self.values[p]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        self.values.iter_mut().flatten().for_each(|x| *x *= k);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BackwardOptions {
    /// Stop gradients through the `-theta s[t-1]` reset and `b s[t-1]`
    /// adaptation terms.
    pub detach_reset: bool,
    /// Deliberately wrong membrane adjoint, used to test gradient checks.
    #[doc(hidden)]
    pub corrupt: bool,
}

/// Adjoint of the readout potentials given the adjoint of the class scores.
fn readout_adjoint(u_out: &[f64], g_scores: &[f64], mode: ReadoutMode) -> Vec<f64> {
    let classes = g_scores.len();
    let mut g = vec![0.0; u_out.len()];
    for (row, grow) in u_out.chunks_exact(classes).zip(g.chunks_exact_mut(classes)) {
        match mode {
            ReadoutMode::SumPotentials => grow.copy_from_slice(g_scores),
            ReadoutMode::SoftmaxSum => {
                let q = softmax(row);
                let dot: f64 = q.iter().zip(g_scores).map(|(a, b)| a * b).sum();
                for c in 0..classes {
                    grow[c] = q[c] * (g_scores[c] - dot);
                }
            }
        }
    }
    g
}

/// Synapse-set backward. `g_current` is `horizon x post`; returns the
/// adjoint of the presynaptic signal when `want_pre` is set.
fn synapse_backward(
    syn: &SynapseSet,
    pre: &[f64],
    g_current: &[f64],
    horizon: usize,
    want_pre: bool,
    d_weights: &mut [f64],
    d_bias: &mut [f64],
    d_delays: &mut [f64],
) -> Vec<f64> {
    let (np, nq) = (syn.pre, syn.post);
    let d_max = syn.delays.d_max;
    // postsynaptic-major copies so the inner loop runs over contiguous `j`
    let mut lag = vec![0usize; np * nq];
    let mut frac = vec![0.0; np * nq];
    let mut weight = vec![0.0; np * nq];
    for j in 0..np {
        for i in 0..nq {
            let (k, f) = split_delay(syn.delays.get(j, i), d_max);
            lag[i * np + j] = k;
            frac[i * np + j] = f;
            weight[i * np + j] = syn.weights[j * nq + i];
        }
    }
    let mut gw_t = vec![0.0; np * nq];
    let mut gd_t = vec![0.0; np * nq];
    let mut g_pre = if want_pre { vec![0.0; horizon * np] } else { Vec::new() };
    let at = |t: isize, j: usize| -> f64 {
        if t < 0 {
            0.0
        } else {
            pre[t as usize * np + j]
        }
    };
    for t in 0..horizon {
        for i in 0..nq {
            let g = g_current[t * nq + i];
            if g == 0.0 {
                continue;
            }
            d_bias[i] += g;
            let base = i * np;
            for j in 0..np {
                let idx = base + j;
                let k = lag[idx];
                let f = frac[idx];
                let tr = t as isize - k as isize;
                let recent = at(tr, j);
                let older = at(tr - 1, j);
                let a = if f == 0.0 { recent } else { (1.0 - f) * recent + f * older };
                gw_t[idx] += g * a;
                let gf = g * weight[idx];
                if d_max > 0 {
                    gd_t[idx] += gf * (older - recent);
                }
                if want_pre && tr >= 0 {
                    g_pre[tr as usize * np + j] += gf * (1.0 - f);
                    if f != 0.0 && tr >= 1 {
                        g_pre[(tr - 1) as usize * np + j] += gf * f;
                    }
                }
            }
        }
    }
    for j in 0..np {
        for i in 0..nq {
            d_weights[j * nq + i] += gw_t[i * np + j];
            d_delays[j * nq + i] += gd_t[i * np + j];
        }
    }
    g_pre
}

/// Hidden-layer backward. `g_out` is the adjoint of the layer output;
/// returns the adjoint of the input current.
#[allow(clippy::too_many_arguments)]
fn layer_backward(
    net: &Network,
    l: usize,
    tr: &LayerTrace,
    g_out: &[f64],
    horizon: usize,
    opts: BackwardOptions,
    grads: &mut Gradients,
) -> Result<Vec<f64>> {
    let p = &net.neurons[l];
    let n = p.len();
    let theta = net.config.theta;
    let surrogate = net.config.surrogate;
    let mut gu_next = vec![0.0; n];
    let mut gw_next = vec![0.0; n];
    let mut g_current = vec![0.0; horizon * n];
    let (mut d_alpha, mut d_beta, mut d_a, mut d_b) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for t in (0..horizon).rev() {
        let row = t * n;
        for i in 0..n {
            let (alpha, beta, a, b) = (p.alpha[i], p.beta[i], p.a[i], p.b[i]);
            let (u_prev, w_prev, s_prev) = if t == 0 {
                (tr.u0[i], tr.w0[i], 0.0)
            } else {
                (tr.u[row - n + i], tr.w[row - n + i], tr.s[row - n + i])
            };
            let mut gs = g_out[row + i];
            if !tr.keep.is_empty() {
                gs *= tr.keep[row + i];
            }
            if !opts.detach_reset {
                gs += -theta * gu_next[i] + b * gw_next[i];
            }
            let mut sg = surrogate.grad(tr.u[row + i], theta);
            if opts.corrupt {
                sg *= 1.05;
            }
            let gu = gs * sg + alpha * gu_next[i] + (1.0 - beta) * a * gw_next[i];
            let gw = -(1.0 - alpha) * gu_next[i] + beta * gw_next[i];
            if !(gu.is_finite() && gw.is_finite()) {
                return Err(Error::NonFinite {
                    stage: "backward adjoint",
                    layer: l,
                    timestep: t,
                    index: i,
                });
            }
            let current = tr.current[row + i];
            d_alpha[i] += gu * (u_prev - (current - w_prev));
            g_current[row + i] = gu * (1.0 - alpha);
            d_beta[i] += gw * (w_prev - a * u_prev);
            d_a[i] += gw * (1.0 - beta) * u_prev;
            d_b[i] += gw * s_prev;
            gu_next[i] = gu;
            gw_next[i] = gw;
        }
    }
    use crate::network::ParamKind::*;
    for (kind, g) in [(Alpha, d_alpha), (Beta, d_beta), (A, d_a), (B, d_b)] {
        let slot = grads.get_mut(ParamId { kind, layer: l });
        for (x, y) in slot.iter_mut().zip(g) {
            *x += y;
        }
    }
    Ok(g_current)
}

/// Gradients of one sample given the adjoint of its class scores.
pub fn backward_sample(
    net: &Network,
    rec: &SampleRecord,
    g_scores: &[f64],
    opts: BackwardOptions,
) -> Result<Gradients> {
    ensure_len("score adjoint", net.config.classes, g_scores.len())?;
    let horizon = rec.horizon;
    let mut grads = Gradients::zeros_like(net);
    let mut g_current = readout_adjoint(&rec.readout, g_scores, net.config.readout);
    for l in (0..net.synapses.len()).rev() {
        let syn = &net.synapses[l];
        let mut dw = vec![0.0; syn.weights.len()];
        let mut db = vec![0.0; syn.bias.len()];
        let mut dd = vec![0.0; syn.delays.d.len()];
        let g_pre = synapse_backward(
            syn,
            rec.presynaptic(l),
            &g_current,
            horizon,
            l > 0,
            &mut dw,
            &mut db,
            &mut dd,
        );
        use crate::network::ParamKind::*;
        for (kind, g) in [(Weights, dw), (Bias, db), (Delays, dd)] {
            let slot = grads.get_mut(ParamId { kind, layer: l });
            for (x, y) in slot.iter_mut().zip(g) {
                *x += y;
            }
        }
        if l > 0 {
            g_current = layer_backward(net, l - 1, &rec.hidden[l - 1], &g_pre, horizon, opts, &mut grads)?;
        }
    }
    Ok(grads)
}

/// Samples per reduction chunk. Fixed, so the summation order does not depend
/// on the thread count.
const CHUNK: usize = 8;

/// Batch loss and gradients. Per-sample gradients are summed in a fixed order.
pub fn backward(
    record: &ForwardRecord,
    labels: &[usize],
    net: &Network,
    opts: BackwardOptions,
) -> Result<(f64, Gradients)> {
    let scores: Vec<Vec<f64>> = record.samples.iter().map(|s| s.scores.clone()).collect();
    let (value, g_scores) = loss_and_grad(&scores, labels)?;
    let partial = record
        .samples
        .par_chunks(CHUNK)
        .zip(g_scores.par_chunks(CHUNK))
        .map(|(recs, gs)| -> Result<Gradients> {
            let mut acc = Gradients::zeros_like(net);
            for (r, g) in recs.iter().zip(gs) {
                acc.add_assign(&backward_sample(net, r, g, opts)?);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Gradients::zeros_like(net);
    for p in &partial {
        total.add_assign(p);
    }
    if !total.is_finite() {
        let (slot, idx) = total
            .values
            .iter()
            .enumerate()
            .find_map(|(s, v)| v.iter().position(|x| !x.is_finite()).map(|i| (s, i)))
            .unwrap();
        return Err(Error::NonFinite {
            stage: "parameter gradient",
            layer: total.ids[slot].layer,
            timestep: 0,
            index: idx,
        });
    }
    Ok((value, total))
}
