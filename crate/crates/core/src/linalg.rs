//! Dense complex Hermitian kernels.
//!
//! Everything downstream (states, effects, SDP iterates, matrix exponentials)
//! is a [`HermitianMatrix`]. The type symmetrizes on construction, so callers
//! never have to worry about round-off breaking Hermiticity after a product.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type C64 = Complex<f64>;

/// Numerical tolerances shared across the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Max |A_jk - conj(A_kj)| after construction.
    pub hermitian: f64,
    /// Relative reconstruction error of an eigendecomposition.
    pub reconstruction: f64,
    /// Max deviation of V†V from the identity.
    pub orthonormality: f64,
    /// |tr ρ - 1| accepted for a density matrix.
    pub trace: f64,
    /// Most negative eigenvalue accepted for PSD objects.
    pub psd: f64,
    /// Frobenius error of Σ E_i - I accepted for a POVM.
    pub povm_completeness: f64,
    /// Eigenvalues above this count toward the rank.
    pub rank_threshold: f64,
    /// Slack on Σ f_i ≤ 1 for a clean measurement record.
    pub frequency_mass_slack: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    hermitian: 1e-12,
    reconstruction: 1e-10,
    orthonormality: 1e-10,
    trace: 1e-10,
    psd: 1e-10,
    povm_completeness: 1e-9,
    rank_threshold: 1e-12,
    frequency_mass_slack: 1e-6,
};

/// Iteration cap handed to the symmetric QR sweep.
const EIG_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix dimension must be at least 1")]
    Empty,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("eigendecomposition did not converge within {iterations} iterations")]
    EigenNonConvergence { iterations: usize },
    #[error("eigenvalue {eigenvalue} lies outside the domain of the spectral function")]
    Domain { eigenvalue: f64 },
    #[error("expected {expected} entries, got {got}")]
    EntryCount { expected: usize, got: usize },
}

/// A d×d complex Hermitian matrix.
#[derive(Clone, PartialEq)]
pub struct HermitianMatrix {
    inner: DMatrix<C64>,
}

impl fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermitianMatrix{}", self.inner)
    }
}

impl HermitianMatrix {
    /// Wraps `m`, replacing it by its Hermitian part `(m + m†)/2`.
    pub fn new(m: DMatrix<C64>) -> Result<Self, LinalgError> {
        if m.nrows() != m.ncols() {
            return Err(LinalgError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(LinalgError::Empty);
        }
        Ok(Self::symmetrized(m))
    }

    fn symmetrized(m: DMatrix<C64>) -> Self {
        let d = m.nrows();
        let mut out = m;
        for j in 0..d {
            out[(j, j)] = C64::new(out[(j, j)].re, 0.0);
            for k in (j + 1)..d {
                let avg = (out[(j, k)] + out[(k, j)].conj()) * 0.5;
                out[(j, k)] = avg;
                out[(k, j)] = avg.conj();
            }
        }
        Self { inner: out }
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self::symmetrized(m)
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            inner: DMatrix::zeros(d, d),
        }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            inner: DMatrix::identity(d, d),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        Self { inner: m }
    }

    /// Rank-one projector |v⟩⟨v| (v is not normalized here).
    pub fn outer(v: &DVector<C64>) -> Self {
        Self::symmetrized(v * v.adjoint())
    }

    /// Builds from row-major `[re, im]` pairs.
    pub fn from_row_major(dim: usize, entries: &[[f64; 2]]) -> Result<Self, LinalgError> {
        if dim == 0 {
            return Err(LinalgError::Empty);
        }
        if entries.len() != dim * dim {
            return Err(LinalgError::EntryCount {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        let m = DMatrix::from_fn(dim, dim, |r, c| {
            let [re, im] = entries[r * dim + c];
            C64::new(re, im)
        });
        Ok(Self::symmetrized(m))
    }

    pub fn to_row_major(&self) -> Vec<[f64; 2]> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                let z = self.inner[(r, c)];
                out.push([z.re, z.im]);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.inner
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.inner[(row, col)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.inner[(i, i)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            inner: self.inner.map(|z| z * alpha),
        }
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        Self::symmetrized(self.inner.kronecker(&other.inner))
    }

    /// Max |A_jk| over off-diagonal entries.
    pub fn max_off_diagonal(&self) -> f64 {
        let d = self.dim();
        let mut best: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                if r != c {
                    best = best.max(self.inner[(r, c)].norm());
                }
            }
        }
        best
    }

    /// Isometric real coordinates: diagonal entries, then `√2·Re`, `√2·Im`
    /// of each strictly upper entry. `svec(A)·svec(B) = Re tr(AB)`.
    pub fn svec(&self) -> DVector<f64> {
        svec(&self.inner)
    }

    pub fn from_svec(d: usize, v: &[f64]) -> Result<Self, LinalgError> {
        if v.len() != d * d {
            return Err(LinalgError::EntryCount {
                expected: d * d,
                got: v.len(),
            });
        }
        Ok(Self { inner: smat(d, v) })
    }

    pub fn min_eigenvalue(&self) -> Result<f64, LinalgError> {
        Ok(eig_hermitian(self)?.eigenvalues[0])
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: Self) -> HermitianMatrix {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch in add");
        HermitianMatrix {
            inner: &self.inner + &rhs.inner,
        }
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: Self) -> HermitianMatrix {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch in sub");
        HermitianMatrix {
            inner: &self.inner - &rhs.inner,
        }
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, rhs: f64) -> HermitianMatrix {
        self.scale(rhs)
    }
}

#[derive(Serialize, Deserialize)]
struct HermitianRepr {
    dim: usize,
    entries: Vec<[f64; 2]>,
}

impl Serialize for HermitianMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        HermitianRepr {
            dim: self.dim(),
            entries: self.to_row_major(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for HermitianMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = HermitianRepr::deserialize(deserializer)?;
        HermitianMatrix::from_row_major(repr.dim, &repr.entries).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn svec(m: &DMatrix<C64>) -> DVector<f64> {
    let d = m.nrows();
    let mut out = DVector::zeros(d * d);
    svec_into(m, out.as_mut_slice());
    out
}

pub(crate) fn svec_into(m: &DMatrix<C64>, out: &mut [f64]) {
    let d = m.nrows();
    let s2 = std::f64::consts::SQRT_2;
    for i in 0..d {
        out[i] = m[(i, i)].re;
    }
    let mut idx = d;
    for i in 0..d {
        for j in (i + 1)..d {
            // Hermitian part of m, in case m is not exactly Hermitian.
            let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[idx] = s2 * z.re;
            out[idx + 1] = s2 * z.im;
            idx += 2;
        }
    }
}

pub(crate) fn smat(d: usize, v: &[f64]) -> DMatrix<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = C64::new(v[i], 0.0);
    }
    let mut idx = d;
    for i in 0..d {
        for j in (i + 1)..d {
            let z = C64::new(v[idx] * s, v[idx + 1] * s);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            idx += 2;
        }
    }
    m
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<C64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(values) V†`.
    pub fn recompose(&self, values: &[f64]) -> HermitianMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (k, &w) in values.iter().enumerate() {
            scaled.column_mut(k).scale_mut(w);
        }
        HermitianMatrix::from_matrix_unchecked(&scaled * v.adjoint())
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        self.recompose(&self.eigenvalues)
    }

    pub fn eigenvector(&self, k: usize) -> DVector<C64> {
        self.eigenvectors.column(k).into_owned()
    }
}

/// Eigendecomposition of a Hermitian matrix (Householder tridiagonalization
/// followed by implicit symmetric QR). Deterministic for a fixed input.
pub fn eig_hermitian(a: &HermitianMatrix) -> Result<SpectralDecomposition, LinalgError> {
    let d = a.dim();
    let eig = SymmetricEigen::try_new(a.inner.clone(), f64::EPSILON, EIG_MAX_ITER).ok_or(
        LinalgError::EigenNonConvergence {
            iterations: EIG_MAX_ITER,
        },
    )?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// `V diag(f(w)) V†`. A non-finite `f(w)` is reported as a domain error.
pub fn spectral_map<F>(a: &HermitianMatrix, f: F) -> Result<HermitianMatrix, LinalgError>
where
    F: Fn(f64) -> f64,
{
    let eig = eig_hermitian(a)?;
    let mut mapped = Vec::with_capacity(eig.dim());
    for &w in &eig.eigenvalues {
        let v = f(w);
        if !v.is_finite() {
            return Err(LinalgError::Domain { eigenvalue: w });
        }
        mapped.push(v);
    }
    Ok(eig.recompose(&mapped))
}

pub fn expm(a: &HermitianMatrix) -> Result<HermitianMatrix, LinalgError> {
    spectral_map(a, f64::exp)
}

/// Matrix logarithm; every eigenvalue must be strictly positive.
pub fn logm(a: &HermitianMatrix) -> Result<HermitianMatrix, LinalgError> {
    let eig = eig_hermitian(a)?;
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&w| w <= 0.0) {
        return Err(LinalgError::Domain { eigenvalue: bad });
    }
    Ok(eig.recompose(&eig.eigenvalues.iter().map(|w| w.ln()).collect::<Vec<_>>()))
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clipped to zero.
pub fn project_psd(a: &HermitianMatrix) -> Result<HermitianMatrix, LinalgError> {
    let eig = eig_hermitian(a)?;
    if eig.eigenvalues[0] >= 0.0 {
        return Ok(a.clone());
    }
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&w| w.max(0.0)).collect();
    Ok(eig.recompose(&clipped))
}

/// Hilbert–Schmidt inner product `Re tr(AB)`, exactly symmetric in its arguments.
pub fn hs_inner(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64, LinalgError> {
    if a.dim() != b.dim() {
        return Err(LinalgError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let d = a.dim();
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..d {
        diag += a.inner[(i, i)].re * b.inner[(i, i)].re;
        for j in (i + 1)..d {
            let x = a.inner[(i, j)];
            let y = b.inner[(i, j)];
            off += x.re * y.re + x.im * y.im;
        }
    }
    Ok(diag + 2.0 * off)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_hermitian(d: usize, rng: &mut impl Rng) -> HermitianMatrix {
        let m = DMatrix::from_fn(d, d, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        HermitianMatrix::new(m).unwrap()
    }

    #[test]
    fn identity_spectrum() {
        let eig = eig_hermitian(&HermitianMatrix::identity(3)).unwrap();
        for w in eig.eigenvalues {
            assert_abs_diff_eq!(w, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn diagonal_spectrum_is_sorted() {
        let eig = eig_hermitian(&HermitianMatrix::from_real_diagonal(&[2.0, -1.0])).unwrap();
        assert_abs_diff_eq!(eig.eigenvalues[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.eigenvalues[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn two_by_two_matches_quadratic_formula() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = random_hermitian(2, &mut rng);
            let p = a.get(0, 0).re;
            let q = a.get(1, 1).re;
            let b = a.get(0, 1).norm_sqr();
            let disc = ((p - q) * (p - q) / 4.0 + b).sqrt();
            let mid = (p + q) / 2.0;
            let eig = eig_hermitian(&a).unwrap();
            assert_abs_diff_eq!(eig.eigenvalues[0], mid - disc, epsilon = 1e-12);
            assert_abs_diff_eq!(eig.eigenvalues[1], mid + disc, epsilon = 1e-12);
        }
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for d in [1, 2, 5, 16] {
            let a = random_hermitian(d, &mut rng);
            let eig = eig_hermitian(&a).unwrap();
            let err = (&eig.reconstruct() - &a).frobenius_norm();
            assert!(err <= TOLERANCES.reconstruction * (1.0 + a.frobenius_norm()));
            let gram = eig.eigenvectors.adjoint() * &eig.eigenvectors;
            let dev = (gram - DMatrix::<C64>::identity(d, d)).norm();
            assert!(dev <= TOLERANCES.orthonormality);
            assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eig_is_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let a = random_hermitian(6, &mut rng);
        let e1 = eig_hermitian(&a).unwrap();
        let e2 = eig_hermitian(&a).unwrap();
        assert_eq!(e1.eigenvalues, e2.eigenvalues);
        assert_eq!(e1.eigenvectors, e2.eigenvectors);
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = expm(&HermitianMatrix::zeros(2)).unwrap();
        assert!((&e - &HermitianMatrix::identity(2)).frobenius_norm() < 1e-14);
    }

    #[test]
    fn exp_of_log_diagonal() {
        let a = HermitianMatrix::from_real_diagonal(&[2f64.ln(), 3f64.ln()]);
        let e = expm(&a).unwrap();
        assert_abs_diff_eq!(e.get(0, 0).re, 2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(e.get(1, 1).re, 3.0, epsilon = 1e-13);
        assert!(e.max_off_diagonal() < 1e-14);
    }

    #[test]
    fn log_exp_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for d in [2, 3, 4] {
            let mut a = random_hermitian(d, &mut rng);
            let n = eig_hermitian(&a).unwrap();
            let spectral_norm = n.eigenvalues[0].abs().max(n.eigenvalues[d - 1].abs());
            a = a.scale(1.0 / spectral_norm);
            let back = logm(&expm(&a).unwrap()).unwrap();
            assert!((&back - &a).frobenius_norm() < 1e-9);
        }
    }

    #[test]
    fn log_of_singular_is_domain_error() {
        let a = HermitianMatrix::from_real_diagonal(&[1.0, 0.0]);
        assert_eq!(logm(&a), Err(LinalgError::Domain { eigenvalue: 0.0 }));
        let b = HermitianMatrix::from_real_diagonal(&[-0.5, 1.0]);
        assert!(matches!(
            spectral_map(&b, f64::ln),
            Err(LinalgError::Domain { eigenvalue }) if eigenvalue == -0.5
        ));
    }

    #[test]
    fn identity_map_is_noop_and_exp_is_pd() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let a = random_hermitian(5, &mut rng);
        let same = spectral_map(&a, |x| x).unwrap();
        assert!((&same - &a).frobenius_norm() < 1e-12);
        let e = expm(&a.scale(4.0)).unwrap();
        assert!(eig_hermitian(&e).unwrap().eigenvalues[0] > 0.0);
    }

    #[test]
    fn psd_projection_cases() {
        let psd = HermitianMatrix::from_real_diagonal(&[0.3, 0.7]);
        assert!((&project_psd(&psd).unwrap() - &psd).frobenius_norm() < 1e-12);
        let clipped = project_psd(&HermitianMatrix::from_real_diagonal(&[1.0, -0.5])).unwrap();
        assert!(
            (&clipped - &HermitianMatrix::from_real_diagonal(&[1.0, 0.0])).frobenius_norm() < 1e-12
        );
    }

    #[test]
    fn psd_projection_is_idempotent() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..10 {
            let a = random_hermitian(4, &mut rng);
            let once = project_psd(&a).unwrap();
            let twice = project_psd(&once).unwrap();
            assert!((&once - &twice).frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn psd_projection_beats_grid_search_at_d2() {
        // Oracle: the nearest PSD matrix commutes with A, so in A's eigenbasis
        // it is diagonal; scan a dense grid of nonnegative diagonals.
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for _ in 0..5 {
            let a = random_hermitian(2, &mut rng);
            let eig = eig_hermitian(&a).unwrap();
            let proj = project_psd(&a).unwrap();
            let dist = (&proj - &a).frobenius_norm();
            let mut best = f64::INFINITY;
            let steps = 400;
            let hi = eig.eigenvalues[1].max(0.0) + 0.5;
            for i in 0..=steps {
                for j in 0..=steps {
                    let x = hi * i as f64 / steps as f64;
                    let y = hi * j as f64 / steps as f64;
                    let cand = eig.recompose(&[x, y]);
                    best = best.min((&cand - &a).frobenius_norm());
                }
            }
            assert!(
                dist <= best + 1e-12,
                "projection {dist} worse than grid {best}"
            );
            assert!(best - dist < 1e-2);
        }
    }

    #[test]
    fn hs_inner_cases() {
        let rho = HermitianMatrix::from_real_diagonal(&[0.7, 0.3]);
        assert_abs_diff_eq!(
            hs_inner(&HermitianMatrix::identity(2), &rho).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let p = HermitianMatrix::from_real_diagonal(&[1.0, 0.0]);
        assert_abs_diff_eq!(hs_inner(&p, &rho).unwrap(), 0.7, epsilon = 1e-15);
        assert!(matches!(
            hs_inner(&p, &HermitianMatrix::identity(3)),
            Err(LinalgError::DimensionMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn hs_inner_matches_double_sum_and_is_symmetric() {
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        for d in [1, 3, 6] {
            let a = random_hermitian(d, &mut rng);
            let b = random_hermitian(d, &mut rng);
            let mut naive = C64::new(0.0, 0.0);
            for i in 0..d {
                for j in 0..d {
                    naive += a.get(i, j) * b.get(j, i);
                }
            }
            let v = hs_inner(&a, &b).unwrap();
            assert_abs_diff_eq!(v, naive.re, epsilon = 1e-12);
            assert_eq!(v, hs_inner(&b, &a).unwrap());
            assert_abs_diff_eq!(v, a.svec().dot(&b.svec()), epsilon = 1e-12);
        }
    }

    #[test]
    fn svec_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let a = random_hermitian(4, &mut rng);
        let back = HermitianMatrix::from_svec(4, a.svec().as_slice()).unwrap();
        assert!((&back - &a).frobenius_norm() < 1e-14);
    }

    #[test]
    fn construction_symmetrizes() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0, 0.3),
                C64::new(0.0, 1.0),
                C64::new(0.0, 0.0),
                C64::new(2.0, 0.0),
            ],
        );
        let h = HermitianMatrix::new(m).unwrap();
        assert_eq!(h.get(0, 0).im, 0.0);
        assert!((h.get(0, 1) - h.get(1, 0).conj()).norm() <= TOLERANCES.hermitian);
        assert!(matches!(
            HermitianMatrix::new(DMatrix::zeros(2, 3)),
            Err(LinalgError::NotSquare { rows: 2, cols: 3 })
        ));
        assert_eq!(
            HermitianMatrix::new(DMatrix::zeros(0, 0)),
            Err(LinalgError::Empty)
        );
    }
}
