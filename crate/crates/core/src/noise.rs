//! Estimating the noise variance `ε²` from the stream.
//!
//! Two estimators:
//!
//! * the spread estimator `(1/(p n′)) Σ_i Σ_j (Y_ij² − Ȳ_j²)` over a
//!   calibration subsequence. It is consistent only when the forward operator
//!   is the same across that subsequence; with varying operators the
//!   per-pixel means mix different blurred signals and the value is an upper
//!   bound.
//! * the tail estimator: on low-quality observations, the mean power of the
//!   spectral components the operator has (nearly) annihilated. Its bias is
//!   `(1/(p−p′)) Σ_q |D_iq|² |β_q|² ≥ 0`, so it is conservative.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A component counts as annihilated when `|D_ij|²` falls below this
/// fraction of `max_j |D_ij|²`.
pub const TAIL_RELATIVE_THRESHOLD: f64 = 1e-3;
/// An observation is low quality when more than this fraction of its
/// components are annihilated.
pub const TAIL_FLAG_FRACTION: f64 = 0.5;

/// Estimate with a flag recording whether a negative raw value was clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub variance: f64,
    pub clamped: bool,
    pub observations: u64,
}

/// Per-pixel sums for the spread estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadAccumulator {
    pub n: u64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl SpreadAccumulator {
    pub fn new(p: usize) -> Self {
        Self {
            n: 0,
            sum: vec![0.0; p],
            sum_sq: vec![0.0; p],
        }
    }

    pub fn observe(&mut self, y: &[f64]) -> Result<()> {
        if y.len() != self.sum.len() {
            return Err(Error::Dimension {
                expected: self.sum.len(),
                actual: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        for ((s, q), &v) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(y) {
            *s += v;
            *q += v * v;
        }
        self.n += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &SpreadAccumulator) -> Result<()> {
        if other.sum.len() != self.sum.len() {
            return Err(Error::Dimension {
                expected: self.sum.len(),
                actual: other.sum.len(),
            });
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self.n += other.n;
        Ok(())
    }

    pub fn estimate(&self) -> Result<VarianceEstimate> {
        if self.n < 2 {
            return Err(Error::InvalidInput(format!(
                "spread estimator needs at least 2 observations, have {}",
                self.n
            )));
        }
        let n = self.n as f64;
        let p = self.sum.len() as f64;
        let total: f64 = self
            .sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| q - s * s / n)
            .sum();
        let raw = total / (p * n);
        Ok(VarianceEstimate {
            variance: raw.max(0.0),
            clamped: raw < 0.0,
            observations: self.n,
        })
    }
}

/// Batch form of the spread estimator over the given observations.
pub fn epsilon_consistent<'a>(
    observations: impl IntoIterator<Item = &'a [f64]>,
) -> Result<VarianceEstimate> {
    let mut iter = observations.into_iter().peekable();
    let p = iter.peek().map(|y| y.len()).unwrap_or(0);
    let mut acc = SpreadAccumulator::new(p);
    for y in iter {
        acc.observe(y)?;
    }
    acc.estimate()
}

/// Mean power of the spectral components from index `p_prime` to the end.
pub fn epsilon_tail(x: &[Complex64], p_prime: usize) -> Result<f64> {
    let p = x.len();
    if p_prime == 0 || p_prime >= p {
        return Err(Error::InvalidParameter(format!(
            "tail cutoff must satisfy 1 <= p' < p = {p}, got {p_prime}"
        )));
    }
    Ok(tail_power(x, (p_prime..p).collect::<Vec<_>>().as_slice()))
}

fn tail_power(x: &[Complex64], indices: &[usize]) -> f64 {
    indices.iter().map(|&q| x[q].norm_sqr()).sum::<f64>() / indices.len() as f64
}

/// Components the operator has effectively annihilated, if the observation
/// qualifies as low quality.
///
/// Sorting `|D_ij|²` in decreasing order, `p′` is the first position below
/// [`TAIL_RELATIVE_THRESHOLD`]` · max`; the observation is flagged when the
/// tail `p − p′` exceeds [`TAIL_FLAG_FRACTION`] of `p`. Returns the tail's
/// component indices. An all-zero operator is flagged with every component.
pub fn low_quality_tail(d: &[Complex64]) -> Option<Vec<usize>> {
    let mags: Vec<f64> = d.iter().map(|v| v.norm_sqr()).collect();
    let max = mags.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        // Nothing survives a zero operator: the whole observation is noise.
        return if mags.is_empty() {
            None
        } else {
            Some((0..mags.len()).collect())
        };
    }
    let cutoff = TAIL_RELATIVE_THRESHOLD * max;
    let mut order: Vec<usize> = (0..mags.len()).collect();
    order.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]));
    let p_prime = order.iter().position(|&j| mags[j] < cutoff)?;
    let tail = &order[p_prime..];
    if (tail.len() as f64) > TAIL_FLAG_FRACTION * mags.len() as f64 {
        Some(tail.to_vec())
    } else {
        None
    }
}

/// Running mean of the tail estimator over flagged observations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TailAccumulator {
    pub flagged: u64,
    pub sum: f64,
}

impl TailAccumulator {
    /// Fold one spectral observation in; returns its own estimate when it
    /// was flagged.
    pub fn observe(&mut self, d: &[Complex64], x: &[Complex64]) -> Result<Option<f64>> {
        if d.len() != x.len() {
            return Err(Error::Dimension {
                expected: d.len(),
                actual: x.len(),
            });
        }
        let Some(tail) = low_quality_tail(d) else {
            return Ok(None);
        };
        let value = tail_power(x, &tail);
        self.flagged += 1;
        self.sum += value;
        Ok(Some(value))
    }

    pub fn merge(&mut self, other: &TailAccumulator) {
        self.flagged += other.flagged;
        self.sum += other.sum;
    }

    pub fn estimate(&self) -> Result<VarianceEstimate> {
        if self.flagged == 0 {
            return Err(Error::InvalidInput(
                "no low-quality observations flagged yet".into(),
            ));
        }
        Ok(VarianceEstimate {
            variance: self.sum / self.flagged as f64,
            clamped: false,
            observations: self.flagged,
        })
    }
}
