//! Baselines built on the averaged observation model
//! `Ȳ_n = K̄_n θ + (ε/√n) W`, plus exact risks for known `β`.
//!
//! The averaged model loses information whenever the operators differ:
//! by Cauchy–Schwarz `n |D̄_j|² ≤ Δ_nj`, so the best linear estimator built
//! on `B̄_n` can never beat the one built on `B_n`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{log_grid, WeightVector};
use crate::spectral::{EigenvalueVector, SpectralBasis};

pub const GCV_GRID_POINTS: usize = 100;
pub const GCV_GRID_LOW: f64 = 1e-8;
pub const GCV_GRID_HIGH: f64 = 1e8;
const GCV_MIN_DENOMINATOR: f64 = 1e-12;

/// Running sums of the spectral observations and eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedStat {
    basis: SpectralBasis,
    n: u64,
    sum_x: Vec<Complex64>,
    sum_d: Vec<Complex64>,
}

impl AveragedStat {
    pub fn new(basis: SpectralBasis) -> Self {
        let zero = vec![Complex64::new(0.0, 0.0); basis.len()];
        Self {
            basis,
            n: 0,
            sum_x: zero.clone(),
            sum_d: zero,
        }
    }

    pub fn from_sums(
        basis: SpectralBasis,
        n: u64,
        sum_x: Vec<Complex64>,
        sum_d: Vec<Complex64>,
    ) -> Result<Self> {
        basis.check_len(sum_x.len())?;
        basis.check_len(sum_d.len())?;
        Ok(Self {
            basis,
            n,
            sum_x,
            sum_d,
        })
    }

    pub fn basis(&self) -> SpectralBasis {
        self.basis
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn sum_x(&self) -> &[Complex64] {
        &self.sum_x
    }

    pub fn sum_d(&self) -> &[Complex64] {
        &self.sum_d
    }

    pub fn update(&mut self, d: &EigenvalueVector, x: &[Complex64]) -> Result<()> {
        self.basis.check_len(d.len())?;
        self.basis.check_len(x.len())?;
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        for (s, v) in self.sum_x.iter_mut().zip(x) {
            *s += v;
        }
        for (s, v) in self.sum_d.iter_mut().zip(d.values()) {
            *s += v;
        }
        self.n += 1;
        Ok(())
    }

    fn mean(&self, sums: &[Complex64]) -> Vec<Complex64> {
        if self.n == 0 {
            return vec![Complex64::new(0.0, 0.0); sums.len()];
        }
        let inv = 1.0 / self.n as f64;
        sums.iter().map(|s| s * inv).collect()
    }

    /// `X̄_n = Ψ* Ȳ_n`.
    pub fn xbar(&self) -> Vec<Complex64> {
        self.mean(&self.sum_x)
    }

    /// `D̄_n`.
    pub fn dbar(&self) -> Vec<Complex64> {
        self.mean(&self.sum_d)
    }

    /// `B̄_nj = D̄_j* X̄_j / |D̄_j|²`, zero where `D̄_j = 0`.
    pub fn b_bar(&self) -> Vec<Complex64> {
        self.xbar()
            .iter()
            .zip(self.dbar())
            .map(|(x, d)| {
                let mag = d.norm_sqr();
                if mag > 0.0 {
                    d.conj() * x / mag
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }

    /// Ridge smoother `S_j(τ) = |D̄_j|² / (|D̄_j|² + τ)`.
    pub fn ridge_weights(&self, tau: f64) -> Result<WeightVector> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must be finite and >= 0, got {tau}"
            )));
        }
        WeightVector::new(
            self.dbar()
                .iter()
                .map(|d| {
                    let mag = d.norm_sqr();
                    if mag > 0.0 {
                        mag / (mag + tau)
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    }

    /// Generalized cross validation score of the ridge smoother at `tau`,
    /// or `None` when its denominator degenerates.
    pub fn gcv_score(&self, tau: f64) -> Option<f64> {
        let xbar = self.xbar();
        let p = xbar.len() as f64;
        let mut residual = 0.0;
        let mut trace = 0.0;
        for (x, d) in xbar.iter().zip(self.dbar()) {
            let mag = d.norm_sqr();
            let s = if mag > 0.0 { mag / (mag + tau) } else { 0.0 };
            residual += ((1.0 - s) * x).norm_sqr();
            trace += 1.0 - s;
        }
        let denominator = (trace / p).powi(2);
        if denominator < GCV_MIN_DENOMINATOR {
            return None;
        }
        Some((residual / p) / denominator)
    }

    /// The grid the ridge penalty is selected from.
    pub fn gcv_grid(&self) -> Result<Vec<f64>> {
        let mut mags: Vec<f64> = self
            .dbar()
            .iter()
            .map(|d| d.norm_sqr())
            .filter(|&m| m > 0.0)
            .collect();
        if mags.is_empty() {
            return Err(Error::NoIdentifiedComponents);
        }
        mags.sort_by(f64::total_cmp);
        let mid = mags.len() / 2;
        let median = if mags.len().is_multiple_of(2) {
            0.5 * (mags[mid - 1] + mags[mid])
        } else {
            mags[mid]
        };
        Ok(log_grid(
            GCV_GRID_LOW * median,
            GCV_GRID_HIGH * median,
            GCV_GRID_POINTS,
        ))
    }

    /// Ridge penalty minimizing GCV over [`gcv_grid`](Self::gcv_grid).
    pub fn gcv_select_tau(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::InvalidInput("no observations averaged yet".into()));
        }
        let mut best: Option<(f64, f64)> = None;
        for tau in self.gcv_grid()? {
            if let Some(score) = self.gcv_score(tau) {
                if best.is_none_or(|(s, _)| score < s) {
                    best = Some((score, tau));
                }
            }
        }
        best.map(|(_, tau)| tau).ok_or_else(|| {
            Error::InvalidInput("GCV denominator degenerate at every grid point".into())
        })
    }

    /// `β̂ = S(τ) B̄_n`.
    pub fn ridge_beta(&self, tau: f64) -> Result<Vec<Complex64>> {
        Ok(self.ridge_weights(tau)?.apply(&self.b_bar()))
    }

    /// `θ̂_ridge = Ψ S(τ) B̄_n` and the dropped imaginary residual.
    pub fn ridge_estimate(&self, tau: f64) -> Result<(Vec<f64>, f64)> {
        self.basis.from_spectral(&self.ridge_beta(tau)?)
    }
}

/// `R(λ) = Σ_j (λ_j − 1)² |β_j|² + ε² λ_j² / Δ_nj`. An unidentified
/// component (`Δ_nj = 0`) is estimated as zero and costs `|β_j|²`.
pub fn true_risk(lambda: &[f64], beta: &[Complex64], delta: &[f64], epsilon: f64) -> Result<f64> {
    if lambda.len() != beta.len() || delta.len() != beta.len() {
        return Err(Error::Dimension {
            expected: beta.len(),
            actual: if lambda.len() != beta.len() {
                lambda.len()
            } else {
                delta.len()
            },
        });
    }
    let eps2 = epsilon * epsilon;
    Ok(lambda
        .iter()
        .zip(beta)
        .zip(delta)
        .map(|((l, b), &d)| {
            let bias = b.norm_sqr();
            if d > 0.0 {
                (l - 1.0).powi(2) * bias + eps2 * l * l / d
            } else {
                bias
            }
        })
        .sum())
}

/// Risk-minimizing weights for known `β`: `|β_j|² / (|β_j|² + ε²/Δ_nj)`.
pub fn oracle_weights(beta: &[Complex64], delta: &[f64], epsilon: f64) -> Vec<f64> {
    let eps2 = epsilon * epsilon;
    beta.iter()
        .zip(delta)
        .map(|(b, &d)| {
            let mag = b.norm_sqr();
            if d <= 0.0 {
                0.0
            } else if eps2 == 0.0 {
                1.0
            } else if mag == 0.0 {
                0.0
            } else {
                mag / (mag + eps2 / d)
            }
        })
        .collect()
}

/// Oracle risk of one component observed with noise variance `variance`.
fn oracle_component(beta_sq: f64, variance: f64) -> f64 {
    if !variance.is_finite() {
        beta_sq
    } else if beta_sq == 0.0 || variance == 0.0 {
        0.0
    } else {
        beta_sq * variance / (beta_sq + variance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRiskReport {
    /// Oracle linear risk from the spectral sufficient statistic.
    pub r1: f64,
    /// Oracle linear risk from the averaged observations.
    pub r2: f64,
    /// `(r1_j, r2_j)` per component.
    pub per_component: Vec<(f64, f64)>,
}

/// Oracle linear risks under `B_n` (variance `ε²/Δ_nj`) and under `B̄_n`
/// (variance `ε² / (n |D̄_j|²)`).
pub fn oracle_risks(
    beta: &[Complex64],
    d_list: &[EigenvalueVector],
    epsilon: f64,
) -> Result<OracleRiskReport> {
    if d_list.is_empty() {
        return Err(Error::InvalidInput("need at least one observation".into()));
    }
    let p = beta.len();
    for d in d_list {
        if d.len() != p {
            return Err(Error::Dimension {
                expected: p,
                actual: d.len(),
            });
        }
    }
    let n = d_list.len() as f64;
    let eps2 = epsilon * epsilon;
    let mut per_component = Vec::with_capacity(p);
    for (j, b) in beta.iter().enumerate() {
        let delta: f64 = d_list.iter().map(|d| d.values()[j].norm_sqr()).sum();
        let sum: Complex64 = d_list.iter().map(|d| d.values()[j]).sum();
        // n |D̄|² = |Σ D|² / n, which equals Δ exactly when every operator
        // agrees on this component; use Δ itself then so rounding in the
        // two sums cannot separate r1 from r2.
        let first = d_list[0].values()[j];
        let averaged = if d_list.iter().all(|d| d.values()[j] == first) {
            delta
        } else {
            sum.norm_sqr() / n
        };
        let v1 = if delta > 0.0 {
            eps2 / delta
        } else {
            f64::INFINITY
        };
        let v2 = if averaged > 0.0 {
            eps2 / averaged
        } else {
            f64::INFINITY
        };
        let mag = b.norm_sqr();
        per_component.push((oracle_component(mag, v1), oracle_component(mag, v2)));
    }
    Ok(OracleRiskReport {
        r1: per_component.iter().map(|c| c.0).sum(),
        r2: per_component.iter().map(|c| c.1).sum(),
        per_component,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_complex(rng: &mut ChaCha8Rng, p: usize) -> Vec<Complex64> {
        (0..p)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn averaging_identical_and_pairs() {
        let basis = SpectralBasis::one_d(3).unwrap();
        let x = vec![c(1.0, 2.0), c(-1.0, 0.5), c(0.0, 3.0)];
        let mut s = AveragedStat::new(basis);
        for _ in 0..4 {
            s.update(&EigenvalueVector::ones(3), &x).unwrap();
        }
        for (a, e) in s.xbar().iter().zip(&x) {
            assert!((a - e).norm() < 1e-15);
        }
        let mut s = AveragedStat::new(basis);
        let y = vec![c(3.0, 0.0), c(1.0, 0.5), c(2.0, -1.0)];
        s.update(&EigenvalueVector::ones(3), &x).unwrap();
        s.update(&EigenvalueVector::ones(3), &y).unwrap();
        for ((a, u), v) in s.xbar().iter().zip(&x).zip(&y) {
            assert!((a - (u + v) * 0.5).norm() < 1e-15);
        }
    }

    #[test]
    fn streaming_mean_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let basis = SpectralBasis::one_d(5).unwrap();
        let obs: Vec<_> = (0..7)
            .map(|_| (random_complex(&mut rng, 5), random_complex(&mut rng, 5)))
            .collect();
        let mut s = AveragedStat::new(basis);
        for (d, x) in &obs {
            s.update(&EigenvalueVector::new(d.clone()).unwrap(), x)
                .unwrap();
        }
        for j in 0..5 {
            let xm: Complex64 = obs.iter().map(|o| o.1[j]).sum::<Complex64>() / 7.0;
            let dm: Complex64 = obs.iter().map(|o| o.0[j]).sum::<Complex64>() / 7.0;
            assert!((s.xbar()[j] - xm).norm() <= 1e-12 * xm.norm().max(1.0));
            assert!((s.dbar()[j] - dm).norm() <= 1e-12 * dm.norm().max(1.0));
            let expected = dm.conj() * xm / dm.norm_sqr();
            assert!((s.b_bar()[j] - expected).norm() < 1e-10);
        }
    }

    #[test]
    fn b_bar_identity_and_noiseless() {
        let basis = SpectralBasis::one_d(3).unwrap();
        let x = vec![c(1.0, 2.0), c(-1.0, 0.5), c(0.0, 3.0)];
        let mut s = AveragedStat::new(basis);
        s.update(&EigenvalueVector::ones(3), &x).unwrap();
        assert_eq!(s.b_bar(), x);

        let beta = vec![c(0.5, -0.5), c(2.0, 0.0), c(0.0, 0.0)];
        let d1 = vec![c(1.0, 0.0), c(0.3, 0.4), c(0.0, 0.0)];
        let d2 = vec![c(0.5, 0.5), c(0.1, 0.0), c(0.0, 0.0)];
        let mut s = AveragedStat::new(basis);
        for d in [&d1, &d2] {
            let x: Vec<Complex64> = d.iter().zip(&beta).map(|(a, b)| a * b).collect();
            s.update(&EigenvalueVector::new(d.clone()).unwrap(), &x)
                .unwrap();
        }
        let bb = s.b_bar();
        assert!((bb[0] - beta[0]).norm() < 1e-14);
        assert!((bb[1] - beta[1]).norm() < 1e-14);
        assert_eq!(bb[2], c(0.0, 0.0));
    }

    #[test]
    fn ridge_weight_examples() {
        let basis = SpectralBasis::one_d(2).unwrap();
        let mut s = AveragedStat::new(basis);
        s.update(
            &EigenvalueVector::new(vec![c(1.0, 0.0), c(0.0, 3f64.sqrt())]).unwrap(),
            &[c(0.0, 0.0); 2],
        )
        .unwrap();
        assert_eq!(s.ridge_weights(0.0).unwrap().as_slice(), &[1.0, 1.0]);
        let w = s.ridge_weights(1.0).unwrap();
        assert!((w.as_slice()[0] - 0.5).abs() < 1e-15 && (w.as_slice()[1] - 0.75).abs() < 1e-15);
        assert!(s
            .ridge_weights(1e300)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v < 1e-299));
        assert!(s.ridge_weights(-1.0).is_err());
    }

    #[test]
    fn gcv_is_finite_and_positive_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let basis = SpectralBasis::one_d(16).unwrap();
        let mut s = AveragedStat::new(basis);
        for _ in 0..3 {
            let d = EigenvalueVector::new(random_complex(&mut rng, 16)).unwrap();
            s.update(&d, &random_complex(&mut rng, 16)).unwrap();
        }
        // At the bottom of the grid S ≈ 1 and the denominator degenerates;
        // those points are skipped, the rest must score finitely.
        let scores: Vec<f64> = s
            .gcv_grid()
            .unwrap()
            .into_iter()
            .filter_map(|t| s.gcv_score(t))
            .collect();
        assert!(scores.len() > GCV_GRID_POINTS / 2);
        assert!(scores.iter().all(|g| g.is_finite() && *g > 0.0));
        assert!(s.gcv_score(1e-30).is_none());
        let tau = s.gcv_select_tau().unwrap();
        assert!(s.gcv_grid().unwrap().contains(&tau));
        assert!(AveragedStat::new(basis).gcv_select_tau().is_err());
    }

    #[test]
    fn true_risk_examples() {
        let beta = [c(1.0, 0.0), c(0.0, 2.0)];
        let delta = [2.0, 4.0];
        assert!((true_risk(&[1.0, 1.0], &beta, &delta, 1.0).unwrap() - (0.5 + 0.25)).abs() < 1e-15);
        assert!((true_risk(&[0.0, 0.0], &beta, &delta, 1.0).unwrap() - 5.0).abs() < 1e-15);
        let r = true_risk(&[0.5], &[c(1.0, 0.0)], &[1.0], 1.0).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        assert!(true_risk(&[0.5], &beta, &delta, 1.0).is_err());
    }

    #[test]
    fn oracle_weights_beat_random_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let beta = random_complex(&mut rng, 6);
        let delta: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..5.0)).collect();
        let star = oracle_weights(&beta, &delta, 0.7);
        let best = true_risk(&star, &beta, &delta, 0.7).unwrap();
        for _ in 0..1000 {
            let lambda: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..=1.0)).collect();
            assert!(best <= true_risk(&lambda, &beta, &delta, 0.7).unwrap() + 1e-12);
        }
    }

    #[test]
    fn oracle_risks_equal_for_fixed_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let beta = random_complex(&mut rng, 4);
        let d = EigenvalueVector::new(random_complex(&mut rng, 4)).unwrap();
        let report = oracle_risks(&beta, &[d.clone(), d.clone(), d], 0.5).unwrap();
        assert!((report.r1 - report.r2).abs() <= 1e-12 * report.r1);
    }

    #[test]
    fn orthogonal_phases_favour_spectral_statistic() {
        let beta = [c(1.0, 0.0)];
        let d1 = EigenvalueVector::new(vec![c(1.0, 0.0)]).unwrap();
        let d2 = EigenvalueVector::new(vec![c(0.0, 1.0)]).unwrap();
        let report = oracle_risks(&beta, &[d1, d2], 1.0).unwrap();
        // v1 = 1/2, v2 = 1/(2·|(1+i)/2|²) = 1
        assert!((report.r1 - (0.5 / 1.5)).abs() < 1e-15);
        assert!((report.r2 - 0.5).abs() < 1e-15);
        assert!(report.r1 < report.r2);
    }

    #[test]
    fn cancelled_average_costs_full_bias() {
        let beta = [c(2.0, 0.0)];
        let d1 = EigenvalueVector::new(vec![c(1.0, 0.0)]).unwrap();
        let d2 = EigenvalueVector::new(vec![c(-1.0, 0.0)]).unwrap();
        let report = oracle_risks(&beta, &[d1, d2], 1.0).unwrap();
        assert_eq!(report.r2, 4.0);
        assert!(oracle_risks(&beta, &[], 1.0).is_err());
    }
}
