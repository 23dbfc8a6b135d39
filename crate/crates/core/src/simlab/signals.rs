//! Test signals on the grid `x_t = −1 + 2t/p`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::SpectralBasis;

/// Centers, width and amplitudes of the two Gaussian bumps.
pub const SMOOTH_CENTERS: [f64; 2] = [-0.3, 0.3];
pub const SMOOTH_WIDTH: f64 = 0.1;
pub const SMOOTH_AMPLITUDES: [f64; 2] = [1.0, 0.8];

/// Positions, heights and half-widths (in grid cells) of the three
/// triangular peaks. The last peak is small enough to vanish under one
/// blurred, noisy observation.
pub const PEAK_POSITIONS: [f64; 3] = [-0.5, 0.0, 0.45];
pub const PEAK_HEIGHTS: [f64; 3] = [1.0, 0.7, 0.06];
pub const PEAK_HALF_WIDTHS: [f64; 3] = [3.0, 3.0, 2.0];

#[derive(Debug, Clone, PartialEq)]
pub enum SignalSpec {
    Smooth,
    Peaked,
    Custom(String, Vec<f64>),
}

impl SignalSpec {
    pub fn name(&self) -> &str {
        match self {
            SignalSpec::Smooth => "smooth",
            SignalSpec::Peaked => "peaked",
            SignalSpec::Custom(name, _) => name,
        }
    }

    pub fn generate(&self, p: usize) -> Result<Vec<f64>> {
        let theta = match self {
            SignalSpec::Smooth => gen_theta_smooth(p)?,
            SignalSpec::Peaked => gen_theta_peaked(p)?,
            SignalSpec::Custom(_, v) => {
                if v.len() != p {
                    return Err(Error::Dimension {
                        expected: p,
                        actual: v.len(),
                    });
                }
                v.clone()
            }
        };
        if theta.iter().any(|v| !v.is_finite()) || theta.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidInput(format!(
                "signal {:?} must be finite and nonzero",
                self.name()
            )));
        }
        Ok(theta)
    }
}

pub(crate) fn grid_point(t: usize, p: usize) -> f64 {
    -1.0 + 2.0 * t as f64 / p as f64
}

/// Spectral coefficients `β = Ψ* θ_smooth`: two Gaussian bumps, tapered by
/// `exp(−(k/(p/8))²)` in signed frequency `k`, with every coefficient past
/// position `p/2` of the low-to-high frequency ordering set exactly to zero.
pub fn smooth_spectrum(p: usize) -> Result<Vec<Complex64>> {
    if p < 8 || !p.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "smooth signal needs an even p >= 8, got {p}"
        )));
    }
    let basis = SpectralBasis::one_d(p)?;
    let bumps: Vec<f64> = (0..p)
        .map(|t| {
            let x = grid_point(t, p);
            SMOOTH_CENTERS
                .iter()
                .zip(SMOOTH_AMPLITUDES)
                .map(|(c, a)| a * (-(x - c).powi(2) / (2.0 * SMOOTH_WIDTH * SMOOTH_WIDTH)).exp())
                .sum()
        })
        .collect();
    let mut beta = basis.to_spectral_real(&bumps)?;
    let scale = p as f64 / 8.0;
    for (j, b) in beta.iter_mut().enumerate() {
        let k = basis.frequency(j).0 as f64;
        *b *= (-(k / scale).powi(2)).exp();
    }
    for &j in &basis.frequency_order()[p / 2 + 1..] {
        beta[j] = Complex64::new(0.0, 0.0);
    }
    Ok(beta)
}

pub fn gen_theta_smooth(p: usize) -> Result<Vec<f64>> {
    let beta = smooth_spectrum(p)?;
    let (theta, _) = SpectralBasis::one_d(p)?.from_spectral(&beta)?;
    Ok(theta)
}

pub(crate) fn peak_center(position: f64, p: usize) -> usize {
    (((position + 1.0) / 2.0 * p as f64).round() as usize) % p
}

pub fn gen_theta_peaked(p: usize) -> Result<Vec<f64>> {
    if p < 8 {
        return Err(Error::InvalidParameter(format!(
            "peaked signal needs p >= 8, got {p}"
        )));
    }
    let mut theta = vec![0.0; p];
    for ((&pos, &height), &half) in PEAK_POSITIONS
        .iter()
        .zip(&PEAK_HEIGHTS)
        .zip(&PEAK_HALF_WIDTHS)
    {
        let c = peak_center(pos, p) as f64;
        for (t, v) in theta.iter_mut().enumerate() {
            *v += height * (1.0 - (t as f64 - c).abs() / half).max(0.0);
        }
    }
    Ok(theta)
}
