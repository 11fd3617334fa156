use crate::error::{Error, Result};
use crate::network::softmax;

fn check_labels(scores: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    crate::error::ensure_len("labels", scores.len(), labels.len())?;
    for (s, &l) in scores.iter().zip(labels) {
        if l >= s.len() {
            return Err(Error::InvalidArgument(format!(
                "label {l} outside [0, {})",
                s.len()
            )));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                stage: "class scores",
                layer: 0,
                timestep: 0,
                index: l,
            });
        }
    }
    Ok(())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let top = crate::network::argmax(xs);
    let m = xs[top];
    let rest: f64 = xs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &x)| (x - m).exp())
        .sum();
    m + rest.ln_1p()
}

/// Mean cross-entropy `-log softmax(scores)[label]` over the batch.
pub fn loss(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_labels(scores, labels)?;
    if scores.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, &l)| {
            let shifted: Vec<f64> = s.iter().map(|x| x - s[l]).collect();
            log_sum_exp(&shifted)
        })
        .sum();
    Ok(total / scores.len() as f64)
}

/// Loss and its gradient with respect to every score.
pub fn loss_and_grad(scores: &[Vec<f64>], labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    let value = loss(scores, labels)?;
    let n = scores.len() as f64;
    let grads = scores
        .iter()
        .zip(labels)
        .map(|(s, &l)| {
            let mut g = softmax(s);
            g[l] -= 1.0;
            g.iter_mut().for_each(|x| *x /= n);
            g
        })
        .collect();
    Ok((value, grads))
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}
