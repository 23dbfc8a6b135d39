//! The estimator class: `θ̂ = Ψ (λ_j B_nj)_j` for a weight vector `λ ∈ [0,1]^p`.
//!
//! Weights are chosen by minimizing the unbiased risk estimate
//! `R̂_n(λ) = Σ_j (λ_j − ψ̂_j)² |B_nj|²` over some subset of `[0,1]^p`, or are
//! given by a parametric family (Tikhonov–Phillips, Landweber) whose tuning
//! parameter is itself picked by `R̂_n`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use crate::accumulator::{BStatistic, SufStat};
use crate::error::{Error, Result};
use crate::isotonic::pav_nonincreasing;

/// Number of log-spaced candidates when tuning the Tikhonov–Phillips penalty.
pub const TP_GRID_POINTS: usize = 50;
/// The grid spans `[TP_GRID_LOW, TP_GRID_HIGH] · median(Δ)`.
pub const TP_GRID_LOW: f64 = 1e-6;
pub const TP_GRID_HIGH: f64 = 1e6;
/// Landweber iteration counts tried when tuning, `1..=LI_MAX_ITERATIONS`.
pub const LI_MAX_ITERATIONS: u32 = 200;

/// Component-wise shrinkage weights, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "weight {v} outside [0, 1]"
            )));
        }
        Ok(Self(values))
    }

    fn from_clamped(values: impl IntoIterator<Item = f64>) -> Self {
        Self(values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `λ(B) = (λ_j B_j)_j`.
    pub fn apply(&self, b: &[Complex64]) -> Vec<Complex64> {
        self.0.iter().zip(b).map(|(l, v)| v * *l).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum EstimatorSpec {
    /// Soft threshold inflated by `Ω_n²`.
    Main,
    /// Minimizer of `R̂_n` over the whole cube.
    Soft,
    /// `λ_j = Δ_nj / (Δ_nj + γ)`; `γ` tuned by `R̂_n` when absent.
    TikhonovPhillips { gamma: Option<f64> },
    /// `λ_j = 1 − (1 − τ Δ_nj)^γ`; tuned by `R̂_n` when absent, with
    /// `τ = 1 / max Δ` by default.
    Landweber {
        iterations: Option<u32>,
        relaxation: Option<f64>,
    },
    /// Minimizer of `R̂_n` over nonincreasing weights.
    Monotone,
}

impl EstimatorSpec {
    pub fn short_name(&self) -> &'static str {
        match self {
            EstimatorSpec::Main => "main",
            EstimatorSpec::Soft => "soft",
            EstimatorSpec::TikhonovPhillips { .. } => "tp",
            EstimatorSpec::Landweber { .. } => "li",
            EstimatorSpec::Monotone => "mono",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorSpec::TikhonovPhillips { gamma: Some(g) } if !(g.is_finite() && g >= 0.0) => {
                Err(Error::InvalidParameter(format!(
                    "gamma must be finite and >= 0, got {g}"
                )))
            }
            EstimatorSpec::Landweber {
                iterations: Some(0),
                ..
            } => Err(Error::InvalidParameter(
                "Landweber needs at least one iteration".into(),
            )),
            EstimatorSpec::Landweber {
                relaxation: Some(t),
                ..
            } if !(t.is_finite() && t > 0.0) => Err(Error::InvalidParameter(format!(
                "relaxation must be finite and > 0, got {t}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" => Ok(EstimatorSpec::Main),
            "soft" => Ok(EstimatorSpec::Soft),
            "tp" => Ok(EstimatorSpec::TikhonovPhillips { gamma: None }),
            "li" => Ok(EstimatorSpec::Landweber {
                iterations: None,
                relaxation: None,
            }),
            "mono" => Ok(EstimatorSpec::Monotone),
            other => Err(Error::InvalidParameter(format!(
                "unknown estimator {other:?}"
            ))),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "noise level must be finite and >= 0, got {epsilon}"
        )))
    }
}

/// Unclipped per-component minimizer of the risk estimate,
/// `ψ̂_j = 1 − ε² / (Δ_nj |B_nj|²)`; zero where `Δ_nj = 0` or `B_nj = 0`.
/// May be negative.
pub fn psi_hat(b: &BStatistic, epsilon: f64) -> Vec<f64> {
    let eps2 = epsilon * epsilon;
    b.b.iter()
        .zip(&b.delta)
        .map(|(bj, &dj)| {
            let mag = bj.norm_sqr();
            if dj > 0.0 && mag > 0.0 {
                1.0 - eps2 / (dj * mag)
            } else {
                0.0
            }
        })
        .collect()
}

/// `R̂_n(λ) = Σ_j (λ_j − ψ̂_j)² |B_nj|²`, the unbiased risk estimate up to a
/// λ-independent constant (see [`risk_offset`]).
pub fn risk_estimate(lambda: &[f64], b: &BStatistic, epsilon: f64) -> Result<f64> {
    if lambda.len() != b.len() {
        return Err(Error::Dimension {
            expected: b.len(),
            actual: lambda.len(),
        });
    }
    let psi = psi_hat(b, epsilon);
    Ok(lambda
        .iter()
        .zip(&psi)
        .zip(&b.b)
        .map(|((l, s), bj)| (l - s).powi(2) * bj.norm_sqr())
        .sum())
}

/// The λ-independent term that turns [`risk_estimate`] into an unbiased
/// estimate of the true risk: `Σ_j ε² ψ̂_j / Δ_nj` over identified components.
pub fn risk_offset(b: &BStatistic, epsilon: f64) -> f64 {
    let eps2 = epsilon * epsilon;
    psi_hat(b, epsilon)
        .iter()
        .zip(&b.delta)
        .filter(|(_, &d)| d > 0.0)
        .map(|(s, d)| eps2 * s / d)
        .sum()
}

/// Threshold rule `(1 − κ ε² / (Δ_nj |B_nj|²))₊`, zero on unidentified or
/// vanishing components.
fn thresholded(b: &BStatistic, epsilon: f64, inflation: f64) -> WeightVector {
    let scale = inflation * epsilon * epsilon;
    WeightVector::from_clamped(b.b.iter().zip(&b.delta).map(|(bj, &dj)| {
        let mag = bj.norm_sqr();
        if dj > 0.0 && mag > 0.0 {
            1.0 - scale / (dj * mag)
        } else {
            0.0
        }
    }))
}

/// Minimizer of `R̂_n` over `[0,1]^p`: the soft threshold.
pub fn weights_soft(b: &BStatistic, epsilon: f64) -> WeightVector {
    thresholded(b, epsilon, 1.0)
}

/// Soft threshold with the threshold inflated by `omega_sq`.
pub fn weights_main(b: &BStatistic, epsilon: f64, omega_sq: f64) -> WeightVector {
    thresholded(b, epsilon, omega_sq)
}

pub fn weights_tp(delta: &[f64], gamma: f64) -> WeightVector {
    WeightVector::from_clamped(
        delta
            .iter()
            .map(|&d| if d > 0.0 { d / (d + gamma) } else { 0.0 }),
    )
}

/// Landweber filter after `iterations` steps with relaxation `tau`. Values
/// are projected onto `[0,1]`; the flag reports whether that projection
/// changed anything (it can only when `τ Δ_nj > 2`).
pub fn weights_li(delta: &[f64], iterations: u32, tau: f64) -> (WeightVector, bool) {
    let mut clamped = false;
    let exponent = iterations.min(i32::MAX as u32) as i32;
    let weights = delta
        .iter()
        .map(|&d| {
            if d <= 0.0 {
                return 0.0;
            }
            let raw = 1.0 - (1.0 - tau * d).powi(exponent);
            if !(0.0..=1.0).contains(&raw) {
                clamped = true;
            }
            raw.clamp(0.0, 1.0)
        })
        .collect();
    (WeightVector(weights), clamped)
}

/// Minimizer of `R̂_n` over nonincreasing weights in index order.
pub fn weights_monotone(b: &BStatistic, epsilon: f64) -> WeightVector {
    let order: Vec<usize> = (0..b.len()).collect();
    weights_monotone_ordered(b, epsilon, &order)
}

/// Minimizer of `R̂_n` subject to `λ_{order[0]} ≥ λ_{order[1]} ≥ …`.
pub fn weights_monotone_ordered(b: &BStatistic, epsilon: f64, order: &[usize]) -> WeightVector {
    let psi = psi_hat(b, epsilon);
    let mag = b.abs_sq();
    let values: Vec<f64> = order.iter().map(|&j| psi[j]).collect();
    let weights: Vec<f64> = order.iter().map(|&j| mag[j]).collect();
    let fitted = pav_nonincreasing(&values, &weights);
    let mut out = vec![0.0; b.len()];
    for (&j, v) in order.iter().zip(fitted) {
        out[j] = v.clamp(0.0, 1.0);
    }
    WeightVector(out)
}

fn median_positive(values: &[f64]) -> Option<f64> {
    let mut positive: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        return None;
    }
    positive.sort_by(f64::total_cmp);
    let mid = positive.len() / 2;
    Some(if positive.len().is_multiple_of(2) {
        0.5 * (positive[mid - 1] + positive[mid])
    } else {
        positive[mid]
    })
}

/// `count` log-spaced points from `low` to `high` inclusive.
pub fn log_grid(low: f64, high: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![low];
    }
    let (a, b) = (low.ln(), high.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Pick the Tikhonov–Phillips penalty minimizing `R̂_n` on the documented grid.
pub fn tune_tp(b: &BStatistic, epsilon: f64) -> Result<(f64, WeightVector)> {
    let scale = median_positive(&b.delta).ok_or(Error::NoIdentifiedComponents)?;
    let mut best: Option<(f64, f64, WeightVector)> = None;
    for gamma in log_grid(TP_GRID_LOW * scale, TP_GRID_HIGH * scale, TP_GRID_POINTS) {
        let w = weights_tp(&b.delta, gamma);
        let risk = risk_estimate(w.as_slice(), b, epsilon)?;
        if best.as_ref().is_none_or(|(r, _, _)| risk < *r) {
            best = Some((risk, gamma, w));
        }
    }
    let (_, gamma, w) = best.expect("grid is nonempty");
    Ok((gamma, w))
}

/// Pick the Landweber iteration count minimizing `R̂_n` for `τ = 1 / max Δ`
/// (or the given `tau`).
pub fn tune_li(b: &BStatistic, epsilon: f64, tau: Option<f64>) -> Result<(u32, f64, WeightVector)> {
    let max = b.delta.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::NoIdentifiedComponents);
    }
    let tau = tau.unwrap_or(1.0 / max);
    let mut best: Option<(f64, u32, WeightVector)> = None;
    for iterations in 1..=LI_MAX_ITERATIONS {
        let (w, _) = weights_li(&b.delta, iterations, tau);
        let risk = risk_estimate(w.as_slice(), b, epsilon)?;
        if best.as_ref().is_none_or(|(r, _, _)| risk < *r) {
            best = Some((risk, iterations, w));
        }
    }
    let (_, iterations, w) = best.expect("grid is nonempty");
    Ok((iterations, tau, w))
}

/// Tuning values actually used by an estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Tuning {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Whether the value(s) came from the `R̂_n` grid rather than the caller.
    pub auto: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `max_j ε² / Δ_nj`; absent while some component is unidentified.
    pub gamma_n: Option<f64>,
    pub omega_sq: Option<f64>,
    /// Components whose weight is exactly zero.
    pub zeroed: usize,
    pub imag_residual: f64,
    /// True when no component has been observed yet.
    pub degenerate: bool,
    pub tuning: Tuning,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub theta_hat: Vec<f64>,
    pub beta_hat: Vec<Complex64>,
    pub weights: WeightVector,
    pub diagnostics: Diagnostics,
}

/// Weights for `spec` given `B_n`, plus the tuning values and any warnings.
pub fn select_weights(
    b: &BStatistic,
    spec: &EstimatorSpec,
    epsilon: f64,
    order: &[usize],
) -> Result<(WeightVector, Tuning, Vec<String>)> {
    spec.validate()?;
    check_epsilon(epsilon)?;
    let mut warnings = Vec::new();
    let mut tuning = Tuning::default();
    let weights = match *spec {
        EstimatorSpec::Main => weights_main(b, epsilon, crate::accumulator::omega_sq(&b.delta)?),
        EstimatorSpec::Soft => weights_soft(b, epsilon),
        EstimatorSpec::Monotone => weights_monotone_ordered(b, epsilon, order),
        EstimatorSpec::TikhonovPhillips { gamma: Some(g) } => {
            tuning.gamma = Some(g);
            weights_tp(&b.delta, g)
        }
        EstimatorSpec::TikhonovPhillips { gamma: None } => {
            let (g, w) = tune_tp(b, epsilon)?;
            tuning.gamma = Some(g);
            tuning.auto = true;
            w
        }
        EstimatorSpec::Landweber {
            iterations,
            relaxation,
        } => {
            let (iters, tau, w) = match iterations {
                Some(iters) => {
                    let max = b.delta.iter().copied().fold(0.0, f64::max);
                    if max <= 0.0 {
                        return Err(Error::NoIdentifiedComponents);
                    }
                    let tau = relaxation.unwrap_or(1.0 / max);
                    (iters, tau, weights_li(&b.delta, iters, tau).0)
                }
                None => {
                    tuning.auto = true;
                    tune_li(b, epsilon, relaxation)?
                }
            };
            let max = b.delta.iter().copied().fold(0.0, f64::max);
            if tau * max > 2.0 {
                warnings.push(format!(
                    "landweber relaxation tau*max(delta) = {} exceeds 2; weights were clamped to [0, 1]",
                    tau * max
                ));
            }
            tuning.iterations = Some(iters);
            tuning.tau = Some(tau);
            w
        }
    };
    Ok((weights, tuning, warnings))
}

/// Compute `θ̂ = Ψ λ(B_n)` for the chosen family.
///
/// With no identified component the estimate is all zeros and
/// `diagnostics.degenerate` is set.
pub fn estimate(state: &SufStat, spec: &EstimatorSpec, epsilon: f64) -> Result<Estimate> {
    spec.validate()?;
    check_epsilon(epsilon)?;
    let basis = state.basis();
    let p = basis.len();
    let b = state.b_statistic();

    if state.identified_count() == 0 {
        return Ok(Estimate {
            theta_hat: vec![0.0; p],
            beta_hat: vec![Complex64::new(0.0, 0.0); p],
            weights: WeightVector(vec![0.0; p]),
            diagnostics: Diagnostics {
                gamma_n: None,
                omega_sq: None,
                zeroed: p,
                imag_residual: 0.0,
                degenerate: true,
                tuning: Tuning::default(),
                warnings: vec!["no identified components; estimate is zero".into()],
            },
        });
    }

    let order = basis.frequency_order();
    let (weights, tuning, warnings) = select_weights(&b, spec, epsilon, &order)?;
    let beta_hat = weights.apply(&b.b);
    let (theta_hat, imag_residual) = basis.from_spectral(&beta_hat)?;
    let zeroed = weights.as_slice().iter().filter(|&&w| w == 0.0).count();

    Ok(Estimate {
        theta_hat,
        beta_hat,
        diagnostics: Diagnostics {
            gamma_n: state.gamma_n(epsilon).ok(),
            omega_sq: state.omega_sq().ok(),
            zeroed,
            imag_residual,
            degenerate: false,
            tuning,
            warnings,
        },
        weights,
    })
}
