//! Seeded Monte Carlo runner producing normalized relative risk tables.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::accumulator::SufStat;
use crate::baselines::{oracle_weights, true_risk, AveragedStat};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorSpec};
use crate::spectral::SpectralBasis;

use super::kernels::{sample_kernel, sample_random_eigenvalues, simulate_spectral};
use super::rng::rng_for;
use super::signals::SignalSpec;

/// Upper bound on `p · max(n) · reps · signals`, the number of simulated
/// spectral values in one run.
pub const MAX_SIMULATED_VALUES: u128 = 1 << 36;
pub const MAX_P: usize = 1 << 20;

/// Something whose risk is tabulated.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Spectral(EstimatorSpec),
    /// Ridge on the averaged model, penalty chosen by GCV.
    RidgeGcv,
    /// Risk of the best linear shrinkage with `β` known; not an estimator,
    /// so its loss is the exact expected loss rather than a sample.
    Oracle,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Spectral(spec) => spec.short_name().to_string(),
            Method::RidgeGcv => "ridge".into(),
            Method::Oracle => "oracle".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub p: usize,
    /// `‖θ‖₁ / (p ε)`; fixes the noise level per signal.
    pub snr: f64,
    /// Checkpoints, strictly increasing.
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub signals: Vec<SignalSpec>,
    pub methods: Vec<Method>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            p: 256,
            snr: 1.0,
            n_grid: vec![50, 100, 200, 300],
            reps: 100,
            seed: 0,
            signals: vec![SignalSpec::Smooth, SignalSpec::Peaked],
            methods: vec![Method::Spectral(EstimatorSpec::Main), Method::RidgeGcv],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 8 || self.p > MAX_P {
            return Err(Error::InvalidParameter(format!(
                "p must be in 8..={MAX_P}, got {}",
                self.p
            )));
        }
        if !(self.snr.is_finite() && self.snr > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "snr must be positive, got {}",
                self.snr
            )));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if self.n_grid.is_empty()
            || self.n_grid[0] == 0
            || self.n_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidParameter(format!(
                "n grid must be nonempty, positive and strictly increasing, got {:?}",
                self.n_grid
            )));
        }
        if self.signals.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidParameter(
                "need at least one signal and one method".into(),
            ));
        }
        for m in &self.methods {
            if let Method::Spectral(spec) = m {
                spec.validate()?;
            }
        }
        let volume = self.p as u128
            * *self.n_grid.last().unwrap() as u128
            * self.reps as u128
            * self.signals.len() as u128;
        if volume > MAX_SIMULATED_VALUES {
            return Err(Error::ResourceLimit(format!(
                "p * max(n) * reps * signals = {volume} exceeds {MAX_SIMULATED_VALUES}"
            )));
        }
        Ok(())
    }

    pub fn epsilon_for(&self, theta: &[f64]) -> f64 {
        theta.iter().map(|v| v.abs()).sum::<f64>() / (self.p as f64 * self.snr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RRCell {
    pub n: usize,
    pub estimator: String,
    pub signal: String,
    pub rr: f64,
    pub se: f64,
    pub reps: usize,
    pub seed: u64,
}

/// First replication's estimate at one checkpoint, for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub n: usize,
    pub estimator: String,
    pub signal: String,
    pub theta: Vec<f64>,
    pub theta_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RRTable {
    pub cells: Vec<RRCell>,
    pub snapshots: Vec<Snapshot>,
    /// Mean squared error per cell, in the same order as `cells`.
    pub mean_loss: Vec<f64>,
}

impl RRTable {
    pub fn get(&self, n: usize, estimator: &str, signal: &str) -> Option<&RRCell> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.estimator == estimator && c.signal == signal)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,estimator,signal,rr,se,reps,seed\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.n, c.estimator, c.signal, c.rr, c.se, c.reps, c.seed
            );
        }
        out
    }
}

/// `sqrt(mean ‖θ̂ − θ‖² / ‖θ‖²)` over a set of estimates.
pub fn rr(theta_hats: &[Vec<f64>], theta: &[f64]) -> Result<f64> {
    if theta_hats.is_empty() {
        return Err(Error::InvalidInput("need at least one estimate".into()));
    }
    let mut losses = Vec::with_capacity(theta_hats.len());
    for t in theta_hats {
        if t.len() != theta.len() {
            return Err(Error::Dimension {
                expected: theta.len(),
                actual: t.len(),
            });
        }
        losses.push(t.iter().zip(theta).map(|(a, b)| (a - b).powi(2)).sum());
    }
    Ok(rr_from_losses(&losses, theta.iter().map(|v| v * v).sum())?.0)
}

/// RR and its Monte Carlo standard error (delta method) from per-replication
/// squared losses.
pub fn rr_from_losses(losses: &[f64], theta_norm_sq: f64) -> Result<(f64, f64)> {
    if losses.is_empty() {
        return Err(Error::InvalidInput("need at least one loss".into()));
    }
    if !(theta_norm_sq.is_finite() && theta_norm_sq > 0.0) {
        return Err(Error::InvalidParameter(
            "signal norm must be positive".into(),
        ));
    }
    let (mean, se_mean) = mean_se(losses);
    let rr = (mean / theta_norm_sq).sqrt();
    let se = if mean > 0.0 {
        se_mean / (2.0 * (mean * theta_norm_sq).sqrt())
    } else {
        0.0
    };
    Ok((rr, se))
}

/// Sample mean and its standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn beta_loss(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

struct RepOutput {
    /// `[checkpoint][method]` squared losses.
    losses: Vec<Vec<f64>>,
    /// `[checkpoint][method]` estimates, kept for replication 0 only.
    estimates: Vec<Vec<Option<Vec<f64>>>>,
}

fn run_rep(
    config: &ExperimentConfig,
    signal_index: usize,
    rep: usize,
    theta: &[f64],
    epsilon: f64,
) -> Result<RepOutput> {
    let basis = SpectralBasis::one_d(config.p)?;
    let beta = basis.to_spectral_real(theta)?;
    let mut rng = rng_for(config.seed, ((signal_index as u64) << 32) | rep as u64);
    let mut state = SufStat::new(basis);
    let mut averaged = AveragedStat::new(basis);
    let keep = rep == 0;
    let mut losses = Vec::with_capacity(config.n_grid.len());
    let mut estimates = Vec::with_capacity(config.n_grid.len());

    let mut seen = 0;
    for &checkpoint in &config.n_grid {
        while seen < checkpoint {
            let (kernel, _) = sample_kernel(&mut rng, config.p)?;
            let d = basis.diagonalize(&kernel)?;
            let x = simulate_spectral(&mut rng, &basis, &beta, &d, epsilon)?;
            state.update(&d, &x)?;
            averaged.update(&d, &x)?;
            seen += 1;
        }
        let mut row = Vec::with_capacity(config.methods.len());
        let mut kept = Vec::with_capacity(config.methods.len());
        for method in &config.methods {
            let (loss, beta_hat) = match method {
                Method::Spectral(spec) => {
                    let est = estimate(&state, spec, epsilon)?;
                    (beta_loss(&est.beta_hat, &beta), Some(est.beta_hat))
                }
                Method::RidgeGcv => {
                    let tau = averaged.gcv_select_tau()?;
                    let bh = averaged.ridge_beta(tau)?;
                    (beta_loss(&bh, &beta), Some(bh))
                }
                Method::Oracle => {
                    let lambda = oracle_weights(&beta, state.delta(), epsilon);
                    (true_risk(&lambda, &beta, state.delta(), epsilon)?, None)
                }
            };
            row.push(loss);
            kept.push(match (keep, beta_hat) {
                (true, Some(bh)) => Some(basis.from_spectral(&bh)?.0),
                _ => None,
            });
        }
        losses.push(row);
        estimates.push(kept);
    }
    Ok(RepOutput { losses, estimates })
}

/// Run every (signal, method, checkpoint) cell. Replications run in
/// parallel on independent random substreams and are reduced in replication
/// order, so the table does not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RRTable> {
    config.validate()?;
    let mut cells = Vec::new();
    let mut snapshots = Vec::new();
    let mut mean_loss = Vec::new();

    for (si, signal) in config.signals.iter().enumerate() {
        let theta = signal.generate(config.p)?;
        let epsilon = config.epsilon_for(&theta);
        let norm_sq: f64 = theta.iter().map(|v| v * v).sum();
        let reps: Vec<RepOutput> = (0..config.reps)
            .into_par_iter()
            .map(|rep| run_rep(config, si, rep, &theta, epsilon))
            .collect::<Result<_>>()?;

        for (ci, &n) in config.n_grid.iter().enumerate() {
            for (mi, method) in config.methods.iter().enumerate() {
                let losses: Vec<f64> = reps.iter().map(|r| r.losses[ci][mi]).collect();
                let (rr, se) = rr_from_losses(&losses, norm_sq)?;
                cells.push(RRCell {
                    n,
                    estimator: method.name(),
                    signal: signal.name().to_string(),
                    rr,
                    se,
                    reps: config.reps,
                    seed: config.seed,
                });
                mean_loss.push(mean_se(&losses).0);
                if let Some(theta_hat) = &reps[0].estimates[ci][mi] {
                    snapshots.push(Snapshot {
                        n,
                        estimator: method.name(),
                        signal: signal.name().to_string(),
                        theta: theta.clone(),
                        theta_hat: theta_hat.clone(),
                    });
                }
            }
        }
    }
    Ok(RRTable {
        cells,
        snapshots,
        mean_loss,
    })
}

/// Mean squared error `‖θ̂_n − θ‖²` and its standard error at each `n`,
/// when every multiplier is drawn independently with
/// `P(|D_ij|² < τ) = τ^ρ`.
pub fn random_eigenvalue_mse(
    theta: &[f64],
    rho: f64,
    epsilon: f64,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
    spec: &EstimatorSpec,
) -> Result<Vec<(usize, f64, f64)>> {
    if reps == 0 || n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "need reps >= 1 and a strictly increasing positive n grid".into(),
        ));
    }
    let p = theta.len();
    let basis = SpectralBasis::one_d(p)?;
    let beta = basis.to_spectral_real(theta)?;
    let per_rep: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>> {
            let mut rng = rng_for(seed, rep as u64);
            let mut state = SufStat::new(basis);
            let mut out = Vec::with_capacity(n_grid.len());
            let mut seen = 0;
            for &checkpoint in n_grid {
                while seen < checkpoint {
                    let d = sample_random_eigenvalues(&mut rng, rho, p)?;
                    let x = simulate_spectral(&mut rng, &basis, &beta, &d, epsilon)?;
                    state.update(&d, &x)?;
                    seen += 1;
                }
                let est = estimate(&state, spec, epsilon)?;
                out.push(beta_loss(&est.beta_hat, &beta));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(n_grid
        .iter()
        .enumerate()
        .map(|(ci, &n)| {
            let losses: Vec<f64> = per_rep.iter().map(|r| r[ci]).collect();
            let (m, se) = mean_se(&losses);
            (n, m, se)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rr_examples() {
        let theta = vec![1.0, -2.0, 2.0];
        assert_eq!(rr(std::slice::from_ref(&theta), &theta).unwrap(), 0.0);
        assert_eq!(rr(&[vec![0.0; 3]], &theta).unwrap(), 1.0);
        // ‖e‖² = 0.25 · 9
        let shifted = vec![1.0 + 1.5, -2.0, 2.0];
        assert!((rr(&[shifted], &theta).unwrap() - 0.5).abs() < 1e-15);
        assert!(rr(&[], &theta).is_err());
        assert!(rr(&[vec![0.0; 2]], &theta).is_err());
    }

    #[test]
    fn rr_standard_error() {
        let (rr, se) = rr_from_losses(&[1.0, 3.0], 8.0).unwrap();
        assert!((rr - 0.5).abs() < 1e-15);
        // se(mean) = 1; d/dm sqrt(m/8) at m = 2 is 1/8
        assert!((se - 0.125).abs() < 1e-15);
    }

    fn small_config(seed: u64, reps: usize) -> ExperimentConfig {
        ExperimentConfig {
            p: 32,
            n_grid: vec![2, 5],
            reps,
            seed,
            methods: vec![
                Method::Spectral(EstimatorSpec::Soft),
                Method::RidgeGcv,
                Method::Oracle,
            ],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn determinism() {
        let a = run_experiment(&small_config(7, 3)).unwrap();
        let b = run_experiment(&small_config(7, 3)).unwrap();
        let c = run_experiment(&small_config(8, 3)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_ne!(a.to_csv(), c.to_csv());
        assert_eq!(a.cells.len(), 2 * 2 * 3);
        assert_eq!(a.snapshots.len(), 2 * 2 * 2);
        assert!(a
            .to_csv()
            .starts_with("n,estimator,signal,rr,se,reps,seed\n"));
    }

    #[test]
    fn parallel_matches_sequential() {
        let config = small_config(11, 4);
        let parallel = run_experiment(&config).unwrap();
        let sequential = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_experiment(&config).unwrap());
        assert_eq!(parallel, sequential);
    }

    #[test]
    fn oracle_is_a_lower_bound_in_expectation() {
        let table = run_experiment(&small_config(3, 20)).unwrap();
        for signal in ["smooth", "peaked"] {
            for n in [2, 5] {
                let oracle = table.get(n, "oracle", signal).unwrap().rr;
                let soft = table.get(n, "soft", signal).unwrap().rr;
                assert!(oracle <= soft, "{signal} n={n}: {oracle} vs {soft}");
            }
        }
    }

    #[test]
    fn invalid_configs() {
        let base = small_config(0, 1);
        for bad in [
            ExperimentConfig {
                reps: 0,
                ..base.clone()
            },
            ExperimentConfig {
                n_grid: vec![],
                ..base.clone()
            },
            ExperimentConfig {
                n_grid: vec![5, 5],
                ..base.clone()
            },
            ExperimentConfig {
                snr: 0.0,
                ..base.clone()
            },
            ExperimentConfig {
                p: 4,
                ..base.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidParameter(_))));
        }
        let huge = ExperimentConfig {
            p: 1 << 16,
            n_grid: vec![1 << 20],
            reps: 1000,
            ..base
        };
        assert!(matches!(huge.validate(), Err(Error::ResourceLimit(_))));
    }
}
