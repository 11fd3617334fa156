//! Per-synapse transmission delays.
//!
//! Delays are real-valued. A delay `d = k + f` with `k = floor(d)` reads the
//! presynaptic train through a two-tap linear interpolation kernel:
//!
//! ```text
//! a[t] = (1 - f) * s[t - k] + f * s[t - k - 1]
//! ```
//!
//! Integer delays are exact shifts. The derivative with respect to the delay
//! is `s[t-k-1] - s[t-k]`, the negative backward time-difference of the
//! delayed train. At integer points this is the right derivative, except at
//! `d = d_max`, which is split as `(d_max - 1, 1.0)` and yields the left one
//! so that no read goes past the line's depth. Times before the stream start
//! read as zero.

use crate::error::{ensure_len, Error, Result};

pub const DEFAULT_MAX_DELAY: usize = 25;

/// Dense delay matrix for one synapse set, stored `pre`-major
/// (`d[j * post + i]` is the delay from presynaptic `j` to postsynaptic `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMatrix {
    pub pre: usize,
    pub post: usize,
    pub d: Vec<f64>,
    pub d_max: usize,
}

impl DelayMatrix {
    pub fn zeros(pre: usize, post: usize, d_max: usize) -> Self {
        DelayMatrix {
            pre,
            post,
            d: vec![0.0; pre * post],
            d_max,
        }
    }

    pub fn from_values(pre: usize, post: usize, d: Vec<f64>, d_max: usize) -> Result<Self> {
        ensure_len("delay matrix", pre * post, d.len())?;
        Ok(DelayMatrix { pre, post, d, d_max })
    }

    #[inline]
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.d[j * self.post + i]
    }

    pub fn clamp(&mut self) {
        let hi = self.d_max as f64;
        for x in &mut self.d {
            *x = x.clamp(0.0, hi);
        }
    }

    pub fn clamped(mut self) -> Self {
        self.clamp();
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_len("delay matrix", self.pre * self.post, self.d.len())?;
        let hi = self.d_max as f64;
        if let Some(x) = self.d.iter().find(|x| !(0.0..=hi).contains(*x)) {
            return Err(Error::InvalidArgument(format!(
                "delay {x} outside [0, {}]",
                self.d_max
            )));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.d.iter().all(|&x| x == 0.0)
    }

    /// Round every delay to the nearest integer step.
    pub fn round(&mut self) {
        for x in &mut self.d {
            *x = x.round();
        }
    }
}

pub fn clamp_delays(d: DelayMatrix) -> DelayMatrix {
    d.clamped()
}

/// Split a delay into integer lag and interpolation fraction.
#[inline]
pub fn split_delay(d: f64, d_max: usize) -> (usize, f64) {
    if d_max > 0 && d >= d_max as f64 {
        return (d_max - 1, 1.0);
    }
    let k = d.floor();
    (k as usize, d - k)
}

#[inline(always)]
pub(crate) fn interpolate(recent: f64, older: f64, frac: f64) -> f64 {
    if frac == 0.0 {
        recent
    } else {
        (1.0 - frac) * recent + frac * older
    }
}

/// Ring buffer of the last `d_max + 1` presynaptic spike vectors.
#[derive(Debug, Clone)]
pub struct DelayLine {
    width: usize,
    depth: usize,
    buf: Vec<f64>,
    /// Slot of the most recent row.
    head: usize,
    /// Rows pushed since the last reset.
    pushed: usize,
}

impl DelayLine {
    pub fn new(width: usize, d_max: usize) -> Self {
        let depth = d_max + 1;
        DelayLine {
            width,
            depth,
            buf: vec![0.0; width * depth],
            head: depth - 1,
            pushed: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Timestep of the most recent row, if any.
    pub fn now(&self) -> Option<usize> {
        self.pushed.checked_sub(1)
    }

    pub fn reset(&mut self) {
        self.buf.iter_mut().for_each(|x| *x = 0.0);
        self.head = self.depth - 1;
        self.pushed = 0;
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        ensure_len("delay line row", self.width, row.len())?;
        self.head = (self.head + 1) % self.depth;
        let start = self.head * self.width;
        self.buf[start..start + self.width].copy_from_slice(row);
        self.pushed += 1;
        Ok(())
    }

    /// Row `lag` steps before the most recent one; `None` before stream start.
    pub fn row(&self, lag: usize) -> Option<&[f64]> {
        assert!(lag < self.depth, "lag {lag} exceeds delay line depth {}", self.depth);
        if lag >= self.pushed {
            return None;
        }
        let slot = (self.head + self.depth - lag) % self.depth;
        Some(&self.buf[slot * self.width..(slot + 1) * self.width])
    }

    #[inline]
    pub fn get(&self, lag: usize, j: usize) -> f64 {
        self.row(lag).map_or(0.0, |r| r[j])
    }
}

fn check_compatible(line: &DelayLine, d: &DelayMatrix) -> Result<()> {
    ensure_len("delay line width", d.pre, line.width())?;
    ensure_len("delay line depth", d.d_max + 1, line.depth())?;
    d.validate()
}

/// Delayed activation `a_ji[t]` of every synapse at the line's current time,
/// `pre`-major like the delay matrix.
pub fn delayed_activation(line: &DelayLine, d: &DelayMatrix) -> Result<Vec<f64>> {
    check_compatible(line, d)?;
    let mut out = vec![0.0; d.d.len()];
    for j in 0..d.pre {
        for i in 0..d.post {
            let (k, f) = split_delay(d.get(j, i), d.d_max);
            let older = if f == 0.0 { 0.0 } else { line.get(k + 1, j) };
            out[j * d.post + i] = interpolate(line.get(k, j), older, f);
        }
    }
    Ok(out)
}

/// Local derivative `da_ji[t] / dd_ji` at the line's current time.
pub fn delay_gradient_local(line: &DelayLine, d: &DelayMatrix) -> Result<Vec<f64>> {
    check_compatible(line, d)?;
    let mut out = vec![0.0; d.d.len()];
    if d.d_max == 0 {
        return Ok(out);
    }
    for j in 0..d.pre {
        for i in 0..d.post {
            let (k, _) = split_delay(d.get(j, i), d.d_max);
            out[j * d.post + i] = line.get(k + 1, j) - line.get(k, j);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Delayed trace of a single synapse over a whole train.
    fn trace(train: &[f64], delay: f64, d_max: usize, grad: bool) -> Vec<f64> {
        let dm = DelayMatrix::from_values(1, 1, vec![delay], d_max).unwrap();
        let mut line = DelayLine::new(1, d_max);
        train
            .iter()
            .map(|&s| {
                line.push(&[s]).unwrap();
                if grad {
                    delay_gradient_local(&line, &dm).unwrap()[0]
                } else {
                    delayed_activation(&line, &dm).unwrap()[0]
                }
            })
            .collect()
    }

    #[test]
    fn integer_and_fractional_shifts() {
        let s = [0.0, 1.0, 0.0, 0.0];
        assert_eq!(trace(&s, 1.0, 25, false), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(trace(&s, 0.0, 25, false), s.to_vec());
        assert_eq!(trace(&s, 0.5, 25, false), vec![0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn local_gradient_examples() {
        let s = [0.0, 1.0, 0.0, 0.0];
        assert_eq!(trace(&s, 0.5, 25, true)[1], -1.0);
        let ones = [1.0; 40];
        for d in [0.3, 4.7, 11.2, 24.9] {
            // past the warm-up, a shifted constant is constant
            assert!(trace(&ones, d, 25, true)[26..].iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn max_delay_reads_stay_inside_the_line() {
        let s: Vec<f64> = (0..40).map(|t| (t % 3 == 0) as u8 as f64).collect();
        let at_cap = trace(&s, 25.0, 25, false);
        for t in 25..40 {
            assert_eq!(at_cap[t], s[t - 25]);
        }
        let g = trace(&s, 25.0, 25, true);
        for t in 26..40 {
            assert_eq!(g[t], s[t - 25] - s[t - 24]);
        }
    }

    #[test]
    fn clamp_examples() {
        let d = DelayMatrix::from_values(1, 3, vec![-0.7, 31.2, 12.5], 25).unwrap();
        assert_eq!(clamp_delays(d).d, vec![0.0, 25.0, 12.5]);
    }

    #[test]
    fn out_of_range_delay_is_an_error() {
        let d = DelayMatrix::from_values(1, 1, vec![26.0], 25).unwrap();
        let mut line = DelayLine::new(1, 25);
        line.push(&[1.0]).unwrap();
        assert!(delayed_activation(&line, &d).is_err());
        assert!(delay_gradient_local(&line, &d).is_err());
    }

    #[test]
    fn reads_before_stream_start_are_zero() {
        let mut line = DelayLine::new(2, 3);
        assert!(line.row(0).is_none());
        line.push(&[1.0, 2.0]).unwrap();
        assert_eq!(line.get(0, 1), 2.0);
        assert_eq!(line.get(3, 1), 0.0);
        for t in 0..5 {
            line.push(&[t as f64, 0.0]).unwrap();
        }
        assert_eq!(line.get(0, 0), 4.0);
        assert_eq!(line.get(3, 0), 1.0);
        line.reset();
        assert_eq!(line.now(), None);
    }

    proptest! {
        #[test]
        fn analytic_gradient_matches_central_difference(
            train in prop::collection::vec(0.0f64..3.0, 30..60),
            k in 0usize..24, frac in 0.05f64..0.95,
        ) {
            let d = k as f64 + frac;
            let eps = 1e-4;
            let plus = trace(&train, d + eps, 25, false);
            let minus = trace(&train, d - eps, 25, false);
            let g = trace(&train, d, 25, true);
            for t in 0..train.len() {
                let fd = (plus[t] - minus[t]) / (2.0 * eps);
                prop_assert!((fd - g[t]).abs() < 1e-6, "t={} fd={} g={}", t, fd, g[t]);
            }
        }

        #[test]
        fn causal_and_monotone_in_memory(
            train in prop::collection::vec(0.0f64..2.0, 10..50),
            d in 0.0f64..10.0, cut in 0usize..10,
        ) {
            let full = trace(&train, d, 10, false);
            // a bigger line gives the same results when all delays fit the old one
            prop_assert_eq!(&full, &trace(&train, d, 25, false));
            // future samples never change the past
            let n = train.len() - cut;
            prop_assert_eq!(&full[..n], &trace(&train[..n], d, 10, false)[..]);
        }
    }
}
