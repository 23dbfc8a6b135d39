//! The streaming sufficient statistic.
//!
//! After `n` observations the only retained state is
//! `num_j = Σ_i D_ij* X_ij` and `Δ_nj = Σ_i |D_ij|²`, from which
//! `B_nj = num_j / Δ_nj` follows. Components with `Δ_nj = 0` are
//! unidentified: their `B_nj` is defined as 0.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{EigenvalueVector, Layout, SpectralBasis};

pub const STATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SufStat {
    basis: SpectralBasis,
    n: u64,
    num: Vec<Complex64>,
    delta: Vec<f64>,
}

fn check_finite(values: &[Complex64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

impl SufStat {
    pub fn new(basis: SpectralBasis) -> Self {
        let p = basis.len();
        Self {
            basis,
            n: 0,
            num: vec![Complex64::new(0.0, 0.0); p],
            delta: vec![0.0; p],
        }
    }

    pub fn basis(&self) -> SpectralBasis {
        self.basis
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn num(&self) -> &[Complex64] {
        &self.num
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Fold one spectral observation `x = D β + ε Z` into the state. O(p).
    /// On error the state is left untouched.
    pub fn update(&mut self, d: &EigenvalueVector, x: &[Complex64]) -> Result<()> {
        self.basis.check_len(d.len())?;
        self.basis.check_len(x.len())?;
        check_finite(d.values(), "eigenvalues")?;
        check_finite(x, "observation")?;
        for ((num, delta), (dj, xj)) in self
            .num
            .iter_mut()
            .zip(self.delta.iter_mut())
            .zip(d.values().iter().zip(x))
        {
            *num += dj.conj() * xj;
            *delta += dj.norm_sqr();
        }
        self.n += 1;
        Ok(())
    }

    /// Combine two independently accumulated streams over the same basis.
    pub fn merge(&mut self, other: &SufStat) -> Result<()> {
        if self.basis != other.basis {
            return Err(Error::BasisMismatch(
                self.basis.layout().to_string(),
                other.basis.layout().to_string(),
            ));
        }
        for (a, b) in self.num.iter_mut().zip(&other.num) {
            *a += b;
        }
        for (a, b) in self.delta.iter_mut().zip(&other.delta) {
            *a += b;
        }
        self.n += other.n;
        Ok(())
    }

    pub fn merged(mut self, other: &SufStat) -> Result<Self> {
        self.merge(other)?;
        Ok(self)
    }

    pub fn b_statistic(&self) -> BStatistic {
        let b = self
            .num
            .iter()
            .zip(&self.delta)
            .map(|(num, &delta)| {
                if delta > 0.0 {
                    num / delta
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        BStatistic {
            b,
            delta: self.delta.clone(),
            n: self.n,
        }
    }

    pub fn identified_count(&self) -> usize {
        self.delta.iter().filter(|&&d| d > 0.0).count()
    }

    /// Heteroscedastic James–Stein threshold inflation
    /// `(p − 2)₊ (1 + max Δ / min Δ)`, with the ratio taken over identified
    /// components only.
    pub fn omega_sq(&self) -> Result<f64> {
        omega_sq(&self.delta)
    }

    /// Worst-case per-component noise variance `max_j ε² / Δ_nj`.
    pub fn gamma_n(&self, epsilon: f64) -> Result<f64> {
        gamma_n(&self.delta, epsilon)
    }

    pub fn to_document(&self) -> SufStatDocument {
        let (layout, p, h, w) = match self.basis.layout() {
            Layout::OneD { p } => ("1d", p, None, None),
            Layout::TwoD { h, w } => ("2d", h * w, Some(h), Some(w)),
        };
        SufStatDocument {
            version: STATE_VERSION,
            layout: layout.to_string(),
            p,
            h,
            w,
            n: self.n,
            num_re: self.num.iter().map(|v| v.re).collect(),
            num_im: self.num.iter().map(|v| v.im).collect(),
            delta: self.delta.clone(),
        }
    }

    pub fn from_document(doc: &SufStatDocument) -> Result<Self> {
        if doc.version != STATE_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported state version {}",
                doc.version
            )));
        }
        let basis = doc.basis()?;
        let p = basis.len();
        for (name, len) in [
            ("num_re", doc.num_re.len()),
            ("num_im", doc.num_im.len()),
            ("delta", doc.delta.len()),
        ] {
            if len != p {
                return Err(Error::InvalidInput(format!(
                    "{name} has length {len}, expected {p}"
                )));
            }
        }
        let num: Vec<Complex64> = doc
            .num_re
            .iter()
            .zip(&doc.num_im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        check_finite(&num, "state numerator")?;
        if doc.delta.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidInput(
                "delta entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            basis,
            n: doc.n,
            num,
            delta: doc.delta.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SufStatDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

pub fn omega_sq(delta: &[f64]) -> Result<f64> {
    let active = delta.iter().copied().filter(|&d| d > 0.0);
    let (min, max) = active.fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
        (lo.min(d), hi.max(d))
    });
    if max <= 0.0 {
        return Err(Error::NoIdentifiedComponents);
    }
    let p = delta.len() as f64;
    Ok((p - 2.0).max(0.0) * (1.0 + max / min))
}

pub fn gamma_n(delta: &[f64], epsilon: f64) -> Result<f64> {
    if let Some(j) = delta.iter().position(|&d| d <= 0.0) {
        return Err(Error::Unidentified(j));
    }
    let min = delta.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(epsilon * epsilon / min)
}

/// Versioned on-disk form of [`SufStat`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufStatDocument {
    pub version: u32,
    /// `"1d"` or `"2d"`.
    pub layout: String,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<usize>,
    pub n: u64,
    pub num_re: Vec<f64>,
    pub num_im: Vec<f64>,
    pub delta: Vec<f64>,
}

impl SufStatDocument {
    pub fn basis(&self) -> Result<SpectralBasis> {
        match (self.layout.as_str(), self.h, self.w) {
            ("1d", _, _) => SpectralBasis::one_d(self.p),
            ("2d", Some(h), Some(w)) if h * w == self.p => SpectralBasis::two_d(h, w),
            ("2d", _, _) => Err(Error::InvalidInput(
                "2d layout needs h and w with h*w == p".into(),
            )),
            (other, _, _) => Err(Error::InvalidInput(format!("unknown layout {other:?}"))),
        }
    }
}

/// `B_n` together with the `Δ_n` it was normalized by.
#[derive(Debug, Clone, PartialEq)]
pub struct BStatistic {
    pub b: Vec<Complex64>,
    pub delta: Vec<f64>,
    pub n: u64,
}

impl BStatistic {
    pub fn new(b: Vec<Complex64>, delta: Vec<f64>, n: u64) -> Result<Self> {
        if b.len() != delta.len() {
            return Err(Error::Dimension {
                expected: b.len(),
                actual: delta.len(),
            });
        }
        Ok(Self { b, delta, n })
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// `|B_nj|²`.
    pub fn abs_sq(&self) -> Vec<f64> {
        self.b.iter().map(|v| v.norm_sqr()).collect()
    }
}
