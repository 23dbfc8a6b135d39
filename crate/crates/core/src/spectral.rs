//! Diagonalization of circular-convolution operators and the unitary change
//! of basis between signal space and spectral (sequence) space.
//!
//! Scaling conventions, fixed here and nowhere else:
//!
//! * `to_spectral` is `Ψ* y`, the forward DFT scaled by `1/√p`, so the
//!   transform is unitary.
//! * `from_spectral` is `Ψ b`, the inverse DFT (positive exponent) scaled by
//!   `1/√p`.
//! * Kernel eigenvalues are the *unnormalized* forward DFT of the taps, so
//!   that `Ψ* (K y) = D ⊙ Ψ* y` for the circulant `K` built from the taps.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        }
    })
}

/// Grid shape of the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    OneD {
        p: usize,
    },
    /// Row-major `h × w` image.
    TwoD {
        h: usize,
        w: usize,
    },
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layout::OneD { p } => write!(f, "1d(p={p})"),
            Layout::TwoD { h, w } => write!(f, "2d({h}x{w})"),
        }
    }
}

/// Descriptor of the unitary DFT basis `Ψ` over a 1D or 2D grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectralBasis {
    layout: Layout,
}

impl SpectralBasis {
    pub fn one_d(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("p must be at least 1".into()));
        }
        Ok(Self {
            layout: Layout::OneD { p },
        })
    }

    pub fn two_d(h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::InvalidParameter(
                "2D shape must have positive height and width".into(),
            ));
        }
        Ok(Self {
            layout: Layout::TwoD { h, w },
        })
    }

    pub fn from_layout(layout: Layout) -> Result<Self> {
        match layout {
            Layout::OneD { p } => Self::one_d(p),
            Layout::TwoD { h, w } => Self::two_d(h, w),
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Number of grid points `p`.
    pub fn len(&self) -> usize {
        match self.layout {
            Layout::OneD { p } => p,
            Layout::TwoD { h, w } => h * w,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Err(Dimension)` unless `actual` equals the signal length.
    pub fn check_len(&self, actual: usize) -> Result<()> {
        let expected = self.len();
        if actual != expected {
            return Err(Error::Dimension { expected, actual });
        }
        Ok(())
    }

    /// Unnormalized in-place DFT along every axis of the layout.
    fn dft_in_place(&self, data: &mut [Complex64], inverse: bool) {
        match self.layout {
            Layout::OneD { p } => plan(p, inverse).process(data),
            Layout::TwoD { h, w } => {
                let rows = plan(w, inverse);
                for row in data.chunks_exact_mut(w) {
                    rows.process(row);
                }
                let cols = plan(h, inverse);
                let mut column = vec![Complex64::new(0.0, 0.0); h];
                for c in 0..w {
                    for r in 0..h {
                        column[r] = data[r * w + c];
                    }
                    cols.process(&mut column);
                    for r in 0..h {
                        data[r * w + c] = column[r];
                    }
                }
            }
        }
    }

    /// Eigenvalues of the (block-)circulant operator whose first column is
    /// `kernel`: the unnormalized DFT of the taps.
    pub fn diagonalize(&self, kernel: &Kernel) -> Result<EigenvalueVector> {
        self.check_len(kernel.len())?;
        let mut data: Vec<Complex64> = kernel
            .taps()
            .iter()
            .map(|&t| Complex64::new(t, 0.0))
            .collect();
        self.dft_in_place(&mut data, false);
        Ok(EigenvalueVector { values: data })
    }

    /// `Ψ* y` for a complex vector.
    pub fn to_spectral(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(y.len())?;
        let mut data = y.to_vec();
        self.dft_in_place(&mut data, false);
        let scale = 1.0 / (self.len() as f64).sqrt();
        data.iter_mut().for_each(|v| *v *= scale);
        Ok(data)
    }

    /// `Ψ* y` for a real signal embedded with zero imaginary part.
    pub fn to_spectral_real(&self, y: &[f64]) -> Result<Vec<Complex64>> {
        self.check_len(y.len())?;
        let data: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.to_spectral(&data)
    }

    /// `Ψ b`, returned as the full complex vector.
    pub fn from_spectral_complex(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(b.len())?;
        let mut data = b.to_vec();
        self.dft_in_place(&mut data, true);
        let scale = 1.0 / (self.len() as f64).sqrt();
        data.iter_mut().for_each(|v| *v *= scale);
        Ok(data)
    }

    /// `Ψ b` projected to the reals. The second value is the largest absolute
    /// imaginary part that was dropped; it is ~0 when `b` is conjugate
    /// symmetric.
    pub fn from_spectral(&self, b: &[Complex64]) -> Result<(Vec<f64>, f64)> {
        let full = self.from_spectral_complex(b)?;
        let residual = full.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        Ok((full.into_iter().map(|v| v.re).collect(), residual))
    }

    /// Circular convolution `K y` computed through the eigenvalues.
    pub fn apply(&self, eigenvalues: &EigenvalueVector, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(eigenvalues.len())?;
        let mut x = self.to_spectral_real(y)?;
        for (xj, dj) in x.iter_mut().zip(eigenvalues.values()) {
            *xj *= dj;
        }
        Ok(self.from_spectral(&x)?.0)
    }

    /// Signed frequency of component `index` along each axis.
    pub fn frequency(&self, index: usize) -> (i64, i64) {
        fn signed(k: usize, n: usize) -> i64 {
            if 2 * k > n {
                k as i64 - n as i64
            } else {
                k as i64
            }
        }
        match self.layout {
            Layout::OneD { p } => (signed(index, p), 0),
            Layout::TwoD { h, w } => (signed(index / w, h), signed(index % w, w)),
        }
    }

    /// Index of the component holding the conjugate-mirrored frequency.
    pub fn mirror(&self, index: usize) -> usize {
        match self.layout {
            Layout::OneD { p } => (p - index) % p,
            Layout::TwoD { h, w } => {
                let (r, c) = (index / w, index % w);
                ((h - r) % h) * w + (w - c) % w
            }
        }
    }

    /// Component indices ordered from low to high frequency radius, with each
    /// conjugate pair kept adjacent. Used wherever an ordering of spectral
    /// components is needed (monotone weights).
    pub fn frequency_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        let key = |i: usize| {
            let (a, b) = self.frequency(i);
            let radius = a * a + b * b;
            let rep = i.min(self.mirror(i));
            (radius, rep, i)
        };
        order.sort_by_key(|&i| key(i));
        order
    }

    /// Dense matrix of the (block-)circulant operator with first column
    /// `kernel`. Only meant for small verification instances.
    pub fn dense_operator(&self, kernel: &Kernel) -> Result<DMatrix<f64>> {
        self.check_len(kernel.len())?;
        let p = self.len();
        let taps = kernel.taps();
        let m = match self.layout {
            Layout::OneD { p } => DMatrix::from_fn(p, p, |t, s| taps[(t + p - s) % p]),
            Layout::TwoD { h, w } => DMatrix::from_fn(p, p, |a, b| {
                let (ra, ca) = (a / w, a % w);
                let (rb, cb) = (b / w, b % w);
                taps[((ra + h - rb) % h) * w + (ca + w - cb) % w]
            }),
        };
        Ok(m)
    }
}

/// First column of a circular-convolution operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    taps: Vec<f64>,
}

impl Kernel {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("kernel taps"));
        }
        Ok(Self { taps })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// Spectral multipliers `D_i` of one forward operator.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueVector {
    values: Vec<Complex64>,
}

impl EigenvalueVector {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::NonFinite("eigenvalues"));
        }
        Ok(Self { values })
    }

    /// Identity operator: all multipliers equal to one.
    pub fn ones(p: usize) -> Self {
        Self {
            values: vec![Complex64::new(1.0, 0.0); p],
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.values
    }
}

/// Outcome of [`validate_shared_diagonalization`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedDiagonalization {
    pub shared: bool,
    /// Largest relative `‖AB − BA‖_F` (and `‖AA* − A*A‖_F`) over the family.
    pub commutator_residual: f64,
    /// Largest relative off-diagonal mass of `U* A U` for the best candidate
    /// common eigenbasis `U`.
    pub diagonalization_residual: f64,
}

const COMMUTE_TOL: f64 = 1e-8;
const DIAGONAL_TOL: f64 = 1e-6;
const MAX_VALIDATION_ORDER: usize = 32;

fn rel_norm(m: &DMatrix<Complex64>, scale: f64) -> f64 {
    let n = m.norm();
    if scale > 0.0 {
        n / scale
    } else {
        n
    }
}

/// Check whether a small family of matrices is simultaneously unitarily
/// diagonalizable: every member normal, every pair commuting, and one common
/// unitary diagonalizing all of them.
///
/// The candidate unitary is the eigenbasis of a random real combination of
/// the Hermitian and skew-Hermitian parts of the family; up to three
/// combinations are tried before giving up.
pub fn validate_shared_diagonalization(
    matrices: &[DMatrix<Complex64>],
) -> Result<SharedDiagonalization> {
    let Some(first) = matrices.first() else {
        return Err(Error::InvalidInput("empty matrix family".into()));
    };
    let order = first.nrows();
    if order == 0 || order > MAX_VALIDATION_ORDER {
        return Err(Error::InvalidParameter(format!(
            "matrix order must be in 1..={MAX_VALIDATION_ORDER}, got {order}"
        )));
    }
    for m in matrices {
        if !m.is_square() {
            return Err(Error::InvalidInput(format!(
                "matrix is not square ({}x{})",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() != order {
            return Err(Error::Dimension {
                expected: order,
                actual: m.nrows(),
            });
        }
    }

    let mut commutator: f64 = 0.0;
    for (a_idx, a) in matrices.iter().enumerate() {
        let na = a.norm();
        let adj = a.adjoint();
        commutator = commutator.max(rel_norm(&(a * &adj - &adj * a), na * na));
        for b in &matrices[a_idx + 1..] {
            let nb = b.norm();
            commutator = commutator.max(rel_norm(&(a * b - b * a), na * nb));
        }
    }

    let half = Complex64::new(0.5, 0.0);
    let half_i = Complex64::new(0.0, -0.5);
    let parts: Vec<DMatrix<Complex64>> = matrices
        .iter()
        .flat_map(|m| {
            let adj = m.adjoint();
            [(m + &adj) * half, (m - &adj) * half_i]
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d1a6);
    let mut best = f64::INFINITY;
    for _attempt in 0..3 {
        let mut combo = DMatrix::<Complex64>::zeros(order, order);
        for part in &parts {
            let c: f64 = rng.random_range(-1.0..1.0);
            combo += part * Complex64::new(c, 0.0);
        }
        // Symmetrize against round-off before the Hermitian solver.
        let combo = (&combo + combo.adjoint()) * half;
        let basis = SymmetricEigen::new(combo).eigenvectors;
        let basis_adj = basis.adjoint();
        let mut worst: f64 = 0.0;
        for m in matrices {
            let mut rotated = &basis_adj * m * &basis;
            for i in 0..order {
                rotated[(i, i)] = Complex64::new(0.0, 0.0);
            }
            worst = worst.max(rel_norm(&rotated, m.norm()));
        }
        best = best.min(worst);
        if best <= DIAGONAL_TOL {
            break;
        }
    }

    Ok(SharedDiagonalization {
        shared: commutator <= COMMUTE_TOL && best <= DIAGONAL_TOL,
        commutator_residual: commutator,
        diagonalization_residual: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Straight O(p²) DFT, independent of the FFT path.
    fn naive_dft(x: &[f64]) -> Vec<Complex64> {
        let p = x.len();
        (0..p)
            .map(|k| {
                (0..p)
                    .map(|t| {
                        x[t] * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / p as f64)
                    })
                    .sum()
            })
            .collect()
    }

    fn random_vec(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
        (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn identity_kernel_has_unit_eigenvalues() {
        let basis = SpectralBasis::one_d(4).unwrap();
        let d = basis
            .diagonalize(&Kernel::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap())
            .unwrap();
        for v in d.values() {
            assert!((v - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn averaging_kernel_keeps_only_dc() {
        let basis = SpectralBasis::one_d(4).unwrap();
        let d = basis
            .diagonalize(&Kernel::new(vec![0.25; 4]).unwrap())
            .unwrap();
        let expected = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        for (v, e) in d.values().iter().zip(expected) {
            assert!((v - e).norm() < 1e-15);
        }
    }

    #[test]
    fn shift_kernel_matches_dense_eigenpairs() {
        let basis = SpectralBasis::one_d(4).unwrap();
        let kernel = Kernel::new(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let d = basis.diagonalize(&kernel).unwrap();
        let dense = basis.dense_operator(&kernel).unwrap().map(|v| c(v, 0.0));
        for j in 0..4 {
            let expected = Complex64::from_polar(1.0, -2.0 * PI * j as f64 / 4.0);
            assert!((d.values()[j] - expected).norm() < 1e-12);
            assert!((d.values()[j].norm() - 1.0).abs() < 1e-12);
            // K v_j = D_j v_j for the Fourier column v_j.
            let v = nalgebra::DVector::from_fn(4, |t, _| {
                Complex64::from_polar(0.5, 2.0 * PI * (j * t) as f64 / 4.0)
            });
            let lhs = &dense * &v;
            let rhs = &v * d.values()[j];
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn diagonalize_matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [1, 2, 3, 7, 16, 31] {
            let taps = random_vec(&mut rng, p);
            let basis = SpectralBasis::one_d(p).unwrap();
            let d = basis
                .diagonalize(&Kernel::new(taps.clone()).unwrap())
                .unwrap();
            for (a, b) in d.values().iter().zip(naive_dft(&taps)) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let basis = SpectralBasis::one_d(4).unwrap();
        let kernel = Kernel::new(vec![1.0; 3]).unwrap();
        assert!(matches!(
            basis.diagonalize(&kernel),
            Err(Error::Dimension {
                expected: 4,
                actual: 3
            })
        ));
        assert!(basis.to_spectral_real(&[1.0; 5]).is_err());
        assert!(basis.from_spectral(&[c(0.0, 0.0); 2]).is_err());
        assert!(SpectralBasis::one_d(0).is_err());
        assert!(SpectralBasis::two_d(0, 3).is_err());
        assert!(Kernel::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn constant_signal_has_only_dc() {
        let basis = SpectralBasis::one_d(8).unwrap();
        let x = basis.to_spectral_real(&[3.0; 8]).unwrap();
        assert!((x[0] - c(3.0 * 8f64.sqrt(), 0.0)).norm() < 1e-12);
        for v in &x[1..] {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn dc_only_spectrum_is_constant() {
        let basis = SpectralBasis::one_d(8).unwrap();
        let mut b = vec![c(0.0, 0.0); 8];
        b[0] = c(2.5 * 8f64.sqrt(), 0.0);
        let (y, residual) = basis.from_spectral(&b).unwrap();
        assert!(residual < 1e-12);
        for v in y {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn roundtrip_and_conjugate_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for basis in [
            SpectralBasis::one_d(37).unwrap(),
            SpectralBasis::two_d(6, 5).unwrap(),
        ] {
            let y = random_vec(&mut rng, basis.len());
            let b = basis.to_spectral_real(&y).unwrap();
            let norm_b: f64 = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            let (back, residual) = basis.from_spectral(&b).unwrap();
            assert!(residual <= 1e-9 * norm_b);
            for (a, e) in back.iter().zip(&y) {
                assert!((a - e).abs() < 1e-12);
            }
            for j in 0..basis.len() {
                let m = basis.mirror(j);
                assert!((b[j] - b[m].conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn separable_2d_kernel_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (h, w) = (4, 6);
        let u = random_vec(&mut rng, h);
        let v = random_vec(&mut rng, w);
        let taps: Vec<f64> = (0..h * w).map(|i| u[i / w] * v[i % w]).collect();
        let basis = SpectralBasis::two_d(h, w).unwrap();
        let d = basis.diagonalize(&Kernel::new(taps).unwrap()).unwrap();
        let du = SpectralBasis::one_d(h)
            .unwrap()
            .diagonalize(&Kernel::new(u).unwrap())
            .unwrap();
        let dv = SpectralBasis::one_d(w)
            .unwrap()
            .diagonalize(&Kernel::new(v).unwrap())
            .unwrap();
        for r in 0..h {
            for col in 0..w {
                let expected = du.values()[r] * dv.values()[col];
                assert!((d.values()[r * w + col] - expected).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn frequency_order_keeps_pairs_adjacent() {
        let basis = SpectralBasis::one_d(8).unwrap();
        assert_eq!(basis.frequency_order(), vec![0, 1, 7, 2, 6, 3, 5, 4]);
        let basis = SpectralBasis::two_d(4, 4).unwrap();
        let order = basis.frequency_order();
        assert_eq!(order[0], 0);
        let mut seen = [false; 16];
        for &i in &order {
            seen[i] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    fn circulant(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<Complex64> {
        let basis = SpectralBasis::one_d(p).unwrap();
        let k = Kernel::new(random_vec(rng, p)).unwrap();
        basis.dense_operator(&k).unwrap().map(|v| c(v, 0.0))
    }

    #[test]
    fn circulants_share_a_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = circulant(&mut rng, 8);
        let b = circulant(&mut rng, 8);
        let out = validate_shared_diagonalization(&[a.clone(), b]).unwrap();
        assert!(out.shared, "{out:?}");
        let out = validate_shared_diagonalization(&[a.clone(), a.transpose()]).unwrap();
        assert!(out.shared, "{out:?}");
    }

    #[test]
    fn symmetric_circulants_with_repeated_eigenvalues() {
        let basis = SpectralBasis::one_d(8).unwrap();
        let sym = |a: f64, b: f64| {
            let mut taps = vec![0.0; 8];
            taps[0] = a;
            taps[1] = b;
            taps[7] = b;
            basis
                .dense_operator(&Kernel::new(taps).unwrap())
                .unwrap()
                .map(|v| c(v, 0.0))
        };
        let out = validate_shared_diagonalization(&[sym(0.5, 0.25), sym(0.2, 0.4)]).unwrap();
        assert!(out.shared, "{out:?}");
    }

    #[test]
    fn non_normal_matrix_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = circulant(&mut rng, 6);
        let b = DMatrix::from_fn(6, 6, |i, j| {
            if j >= i {
                c(rng.random_range(-1.0..1.0), 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let out = validate_shared_diagonalization(&[a, b]).unwrap();
        assert!(!out.shared);
        assert!(out.commutator_residual > 1e-8);
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let a = DMatrix::<Complex64>::zeros(3, 3);
        let b = DMatrix::<Complex64>::zeros(4, 4);
        assert!(validate_shared_diagonalization(&[a.clone(), b]).is_err());
        assert!(validate_shared_diagonalization(&[DMatrix::<Complex64>::zeros(3, 2)]).is_err());
        assert!(validate_shared_diagonalization(&[]).is_err());
        assert!(validate_shared_diagonalization(&[DMatrix::<Complex64>::zeros(33, 33)]).is_err());
        let _ = a;
    }
}
