//! Random forward operators and observation simulation.
//!
//! Blur kernels are equally weighted mixtures of three Gaussians with means
//! [`KERNEL_MEANS`] and standard deviations `0.5 + Exp(1)`, evaluated at
//! signed pixel offsets and normalized to unit `ℓ₁` mass. Mixing offset means
//! makes the kernels asymmetric, so their eigenvalues are complex.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spectral::{EigenvalueVector, Kernel, SpectralBasis};

use super::rng::standard_exponential;

pub const KERNEL_MEANS: [f64; 3] = [-0.75, 0.0, 0.5];
pub const KERNEL_SIGMA_BASE: f64 = 0.5;

fn signed_offset(t: usize, p: usize) -> f64 {
    if 2 * t < p {
        t as f64
    } else {
        t as f64 - p as f64
    }
}

/// Mixture-of-Gaussians kernel with the given component widths, centred so
/// that its mass centroid sits at tap 0 and normalized to unit `ℓ₁` mass.
pub fn mixture_kernel(p: usize, sigmas: [f64; 3]) -> Result<Kernel> {
    if p == 0 {
        return Err(Error::InvalidParameter("p must be positive".into()));
    }
    if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "invalid kernel widths {sigmas:?}"
        )));
    }
    let raw: Vec<f64> = (0..p)
        .map(|t| {
            let u = signed_offset(t, p);
            KERNEL_MEANS
                .iter()
                .zip(sigmas)
                .map(|(m, s)| (-(u - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt()))
                .sum::<f64>()
                / 3.0
        })
        .collect();
    let mass: f64 = raw.iter().sum();
    let centroid: f64 = raw
        .iter()
        .enumerate()
        .map(|(t, v)| signed_offset(t, p) * v)
        .sum::<f64>()
        / mass;
    let shift = centroid.round() as i64;
    let taps: Vec<f64> = (0..p)
        .map(|t| raw[((t as i64 + shift).rem_euclid(p as i64)) as usize] / mass)
        .collect();
    Kernel::new(taps)
}

/// Draw one kernel from the mixture model; also returns the widths used.
pub fn sample_kernel<R: Rng + ?Sized>(rng: &mut R, p: usize) -> Result<(Kernel, [f64; 3])> {
    let sigmas = [
        KERNEL_SIGMA_BASE + standard_exponential(rng),
        KERNEL_SIGMA_BASE + standard_exponential(rng),
        KERNEL_SIGMA_BASE + standard_exponential(rng),
    ];
    Ok((mixture_kernel(p, sigmas)?, sigmas))
}

/// Random multipliers with `P(|D_j|² < τ) = τ^ρ` on `(0, 1]` and uniform
/// phase, independently per component.
pub fn sample_random_eigenvalues<R: Rng + ?Sized>(
    rng: &mut R,
    rho: f64,
    p: usize,
) -> Result<EigenvalueVector> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rho must be positive, got {rho}"
        )));
    }
    let values = (0..p)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>();
            let modulus_sq = u.powf(1.0 / rho);
            let phase = 2.0 * PI * rng.random::<f64>();
            Complex64::from_polar(modulus_sq.sqrt(), phase)
        })
        .collect();
    EigenvalueVector::new(values)
}

fn standard_noise<R: Rng + ?Sized>(rng: &mut R, p: usize) -> Vec<f64> {
    (0..p).map(|_| StandardNormal.sample(rng)).collect()
}

/// `Y = K θ + ε W` in signal space, with `W` real standard normal.
pub fn simulate_signal<R: Rng + ?Sized>(
    rng: &mut R,
    basis: &SpectralBasis,
    theta: &[f64],
    d: &EigenvalueVector,
    epsilon: f64,
) -> Result<Vec<f64>> {
    let mut y = basis.apply(d, theta)?;
    for (v, w) in y.iter_mut().zip(standard_noise(rng, basis.len())) {
        *v += epsilon * w;
    }
    Ok(y)
}

/// `X = D β + ε Ψ* W`: the spectral form of [`simulate_signal`], consuming
/// the same random draws. The noise is drawn in signal space and rotated, so
/// it has exactly the degenerate complex structure of a rotated real vector.
pub fn simulate_spectral<R: Rng + ?Sized>(
    rng: &mut R,
    basis: &SpectralBasis,
    beta: &[Complex64],
    d: &EigenvalueVector,
    epsilon: f64,
) -> Result<Vec<Complex64>> {
    basis.check_len(beta.len())?;
    basis.check_len(d.len())?;
    let z = basis.to_spectral_real(&standard_noise(rng, basis.len()))?;
    Ok(d.values()
        .iter()
        .zip(beta)
        .zip(z)
        .map(|((dj, bj), zj)| dj * bj + zj * epsilon)
        .collect())
}
