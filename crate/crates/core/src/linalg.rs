//! Dense complex linear algebra.
//!
//! Everything in the crate (states, unitaries, superoperators, Choi matrices)
//! is a [`ComplexMatrix`]. Dimensions stay small (system ⊗ environment is at
//! most a few dozen), so there is no sparse path.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;

/// Relative eigenvalue cutoff below which a PSD eigenvalue counts as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

/// Eigenvalues closer than this (relative to the spectral scale) form one
/// degenerate block whose basis is fixed canonically.
const DEGENERACY_TOL: f64 = 1e-12;

/// Dense complex matrix with `(row, col)` indexing.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    inner: DMatrix<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows(), self.cols())?;
        for r in 0..self.rows() {
            write!(f, "  ")?;
            for c in 0..self.cols() {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[C64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix);
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: entries.len(),
            });
        }
        if let Some(bad) = entries.iter().find(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(format!("{bad}")));
        }
        Ok(Self {
            inner: DMatrix::from_row_slice(rows, cols, entries),
        })
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        let c: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_row_major(rows, cols, &c)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            inner: DMatrix::from_fn(rows, cols, f),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| C64::new(0.0, 0.0))
    }

    pub fn identity(d: usize) -> Self {
        Self::from_fn(d, d, |r, c| if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    /// Real diagonal matrix.
    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        Self::from_fn(d, d, |r, c| {
            if r == c {
                C64::new(values[r], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// `|u⟩⟨v|` for column vectors given as slices.
    pub fn ket_bra(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |r, c| u[r] * v[c].conj())
    }

    pub(crate) fn from_nalgebra(inner: DMatrix<C64>) -> Self {
        Self { inner }
    }

    pub(crate) fn as_nalgebra(&self) -> &DMatrix<C64> {
        &self.inner
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                out.push(self.inner[(r, c)]);
            }
        }
        out
    }

    /// Column `c` as a vector.
    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows()).map(|r| self.inner[(r, c)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_nalgebra(self.inner.adjoint())
    }

    pub fn transpose(&self) -> Self {
        Self::from_nalgebra(self.inner.transpose())
    }

    pub fn conj(&self) -> Self {
        Self::from_nalgebra(self.inner.map(|z| z.conj()))
    }

    pub fn trace(&self) -> C64 {
        self.inner.trace()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_nalgebra(&self.inner * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.inner.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Trace inner product `Tr(self† other)`.
    pub fn inner(&self, other: &Self) -> C64 {
        debug_assert_eq!((self.rows(), self.cols()), (other.rows(), other.cols()));
        self.inner
            .iter()
            .zip(other.inner.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `⟨u| self |v⟩`.
    pub fn sandwich(&self, u: &[C64], v: &[C64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..self.rows() {
            let mut row = C64::new(0.0, 0.0);
            for c in 0..self.cols() {
                row += self.inner[(r, c)] * v[c];
            }
            acc += u[r].conj() * row;
        }
        acc
    }

    /// `‖A − A†‖_F`.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        (&self.inner - self.inner.adjoint())
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol * self.frobenius_norm().max(1.0)
    }

    /// `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_nalgebra((&self.inner + self.inner.adjoint()) * C64::new(0.5, 0.0))
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self::from_nalgebra(self.inner.kronecker(&other.inner))
    }

    /// Real parts of the diagonal.
    pub fn diagonal_real(&self) -> Vec<f64> {
        (0..self.rows().min(self.cols()))
            .map(|k| self.inner[(k, k)].re)
            .collect()
    }

    /// Off-diagonal Frobenius norm.
    pub fn off_diagonal_norm(&self) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                if r != c {
                    acc += self.inner[(r, c)].norm_sqr();
                }
            }
        }
        acc.sqrt()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols(),
            other.rows(),
            "matmul shape mismatch {}x{} * {}x{}",
            self.rows(),
            self.cols(),
            other.rows(),
            other.cols()
        );
        Self::from_nalgebra(&self.inner * &other.inner)
    }

    /// `self · x · self†`.
    pub fn conjugate(&self, x: &Self) -> Self {
        self.matmul(x).matmul(&self.adjoint())
    }

    pub fn is_finite(&self) -> bool {
        self.inner.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.inner[idx]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut C64 {
        &mut self.inner[idx]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_nalgebra(&self.inner + &rhs.inner)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_nalgebra(&self.inner - &rhs.inner)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn neg(self) -> ComplexMatrix {
        ComplexMatrix::from_nalgebra(-&self.inner)
    }
}

/// Spectral decomposition of a Hermitian matrix.
///
/// Eigenvalues are nondecreasing. Within a degenerate block the eigenvectors
/// are the pivoted Gram–Schmidt orthonormalization of the block projector's
/// columns, and every eigenvector has its first non-negligible component real
/// and positive. The decomposition therefore depends only on the matrix, not
/// on the solver's internal choices; for a multiple of the identity it
/// returns the computational basis.
#[derive(Clone, Debug)]
pub struct HermitianEigensystem {
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector for `eigenvalues[k]`.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigensystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.eigenvectors.column(k)
    }

    /// `V f(Λ) V†`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let d = self.dim();
        let v = &self.eigenvectors;
        ComplexMatrix::from_fn(d, d, |r, c| {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d {
                acc += v[(r, k)] * f(self.eigenvalues[k]) * v[(c, k)].conj();
            }
            acc
        })
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map_spectrum(|x| x)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }
}

/// Hermitian eigendecomposition with deterministic basis choice.
pub fn herm_eig(a: &ComplexMatrix) -> Result<HermitianEigensystem> {
    if !a.is_square() {
        return Err(Error::NotSquare(a.rows(), a.cols()));
    }
    let defect = a.hermiticity_defect();
    if defect > 1e-10 * a.frobenius_norm().max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    let d = a.rows();
    let h = a.hermitian_part();
    let eig = h.as_nalgebra().clone().symmetric_eigen();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let raw_vectors: Vec<Vec<C64>> = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();

    let scale = values
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut eigenvalues = Vec::with_capacity(d);
    let mut vectors: Vec<Vec<C64>> = Vec::with_capacity(d);
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && (values[end] - values[start]).abs() <= DEGENERACY_TOL * scale {
            end += 1;
        }
        if end - start == 1 {
            eigenvalues.push(values[start]);
            vectors.push(raw_vectors[start].clone());
        } else {
            let block = canonical_block_basis(&raw_vectors[start..end], d);
            for v in block {
                // Rayleigh quotient keeps the reconstruction exact to rounding.
                let lambda = h.sandwich(&v, &v).re;
                eigenvalues.push(lambda);
                vectors.push(v);
            }
        }
        start = end;
    }
    for v in vectors.iter_mut() {
        fix_phase(v);
    }
    let eigenvectors = ComplexMatrix::from_fn(d, d, |r, c| vectors[c][r]);
    Ok(HermitianEigensystem {
        eigenvalues,
        eigenvectors,
    })
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

/// Orthonormal basis of span(block) obtained from the block projector's
/// columns by largest-residual pivoting (ties go to the lower index).
fn canonical_block_basis(block: &[Vec<C64>], d: usize) -> Vec<Vec<C64>> {
    let rank = block.len();
    let projector = |c: usize| -> Vec<C64> {
        (0..d)
            .map(|r| block.iter().map(|v| v[r] * v[c].conj()).sum())
            .collect()
    };
    let mut candidates: Vec<Vec<C64>> = (0..d).map(projector).collect();
    let mut chosen: Vec<Vec<C64>> = Vec::with_capacity(rank);
    let mut used = vec![false; d];
    for _ in 0..rank {
        let best_norm = (0..d)
            .filter(|&c| !used[c])
            .map(|c| norm(&candidates[c]))
            .fold(0.0_f64, f64::max);
        let pick = (0..d)
            .find(|&c| !used[c] && norm(&candidates[c]) >= best_norm - 1e-10)
            .expect("block projector has enough columns");
        used[pick] = true;
        let n = norm(&candidates[pick]);
        let q: Vec<C64> = candidates[pick].iter().map(|z| z / n).collect();
        for (c, cand) in candidates.iter_mut().enumerate() {
            if used[c] {
                continue;
            }
            // Two passes of modified Gram–Schmidt.
            for _ in 0..2 {
                let p = dot(&q, cand);
                for (x, qx) in cand.iter_mut().zip(&q) {
                    *x -= p * qx;
                }
            }
        }
        chosen.push(q);
    }
    chosen
}

/// Rotates the global phase so the first non-negligible component is real
/// and positive.
fn fix_phase(v: &mut [C64]) {
    let n = norm(v);
    if let Some(first) = v.iter().find(|z| z.norm() > 1e-10 * n.max(1e-300)).copied() {
        let phase = first.conj() / first.norm();
        for z in v.iter_mut() {
            *z *= phase;
        }
    }
}

/// `A^α` on the support of a PSD matrix.
///
/// Eigenvalues at or below `RANK_CUTOFF · λ_max` are treated as zero, so a
/// negative `alpha` yields the pseudo-power and `alpha = 0` yields the
/// support projector.
pub fn mat_power(a: &ComplexMatrix, alpha: f64) -> Result<ComplexMatrix> {
    let eig = herm_eig(a)?;
    let lmax = eig.max_eigenvalue().max(0.0);
    let min = eig.min_eigenvalue();
    if min < -RANK_CUTOFF * lmax.max(1.0) {
        return Err(Error::NotPositive(min));
    }
    let cutoff = RANK_CUTOFF * lmax;
    Ok(eig.map_spectrum(|x| if x <= cutoff { 0.0 } else { x.powf(alpha) }))
}

/// Kronecker product, first factor carrying the slow index.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kron(b)
}

/// Traces out every tensor factor except `keep`.
pub fn partial_trace(a: &ComplexMatrix, dims: &[usize], keep: usize) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::NotSquare(a.rows(), a.cols()));
    }
    let total: usize = dims.iter().product();
    if total != a.rows() || dims.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: total,
        });
    }
    if keep >= dims.len() {
        return Err(Error::InvalidIndex {
            index: keep,
            bound: dims.len(),
        });
    }
    let dk = dims[keep];
    let inner: usize = dims[keep + 1..].iter().product();
    let outer: usize = dims[..keep].iter().product();
    Ok(ComplexMatrix::from_fn(dk, dk, |r, c| {
        let mut acc = C64::new(0.0, 0.0);
        for o in 0..outer {
            for i in 0..inner {
                let row = (o * dk + r) * inner + i;
                let col = (o * dk + c) * inner + i;
                acc += a[(row, col)];
            }
        }
        acc
    }))
}

/// Quantum relative entropy `Tr ρ(ln ρ − ln σ)` in nats.
///
/// Returns `f64::INFINITY` when ρ has weight above `1e-10` outside the
/// support of σ.
pub fn relative_entropy(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    if rho.rows() != sigma.rows() || !rho.is_square() || !sigma.is_square() {
        return Err(Error::DimensionMismatch {
            expected: rho.rows(),
            found: sigma.rows(),
        });
    }
    let er = herm_eig(rho)?;
    let es = herm_eig(sigma)?;
    let d = er.dim();
    let r_cut = RANK_CUTOFF * er.max_eigenvalue().max(0.0);
    let s_cut = RANK_CUTOFF * es.max_eigenvalue().max(0.0);

    let mut entropy_term = 0.0;
    for &p in &er.eigenvalues {
        if p > r_cut {
            entropy_term += p * p.ln();
        }
    }
    let mut cross = 0.0;
    let mut leak = 0.0;
    for k in 0..d {
        let p = er.eigenvalues[k];
        if p <= r_cut {
            continue;
        }
        let rk = er.vector(k);
        for l in 0..d {
            let q = es.eigenvalues[l];
            let overlap = dot(&es.vector(l), &rk).norm_sqr();
            if q <= s_cut {
                leak += p * overlap;
            } else {
                cross += p * overlap * q.ln();
            }
        }
    }
    if leak > 1e-10 {
        return Ok(f64::INFINITY);
    }
    Ok(entropy_term - cross)
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    /// Validates Hermiticity, positivity (min eigenvalue ≥ −1e-10) and unit
    /// trace (±1e-10). The stored matrix is the Hermitian part of the input.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare(m.rows(), m.cols()));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidTrace(tr.re));
        }
        let eig = herm_eig(&m)?;
        if eig.min_eigenvalue() < -1e-10 {
            return Err(Error::NotPositive(eig.min_eigenvalue()));
        }
        Ok(Self(m.hermitian_part()))
    }

    /// Normalizes a nonzero PSD matrix to unit trace before validating.
    pub fn normalized(m: ComplexMatrix) -> Result<Self> {
        let tr = m.trace().re;
        if tr <= 0.0 {
            return Err(Error::InvalidTrace(tr));
        }
        Self::new(m.scale_real(1.0 / tr))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self(ComplexMatrix::identity(d).scale_real(1.0 / d as f64))
    }

    pub fn pure(psi: &[C64]) -> Result<Self> {
        let n = norm(psi);
        let v: Vec<C64> = psi.iter().map(|z| z / n).collect();
        Self::new(ComplexMatrix::ket_bra(&v, &v))
    }

    pub fn diagonal(p: &[f64]) -> Result<Self> {
        Self::new(ComplexMatrix::diag(p))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn eigensystem(&self) -> HermitianEigensystem {
        herm_eig(&self.0).expect("density matrices are Hermitian")
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigensystem().min_eigenvalue()
    }

    /// Mixes with the maximally mixed state, `(1−ε)ρ + ε I/d`, when the
    /// smallest eigenvalue is below `1e-10`.
    pub fn regularized(&self, eps: f64) -> Self {
        if self.min_eigenvalue() >= 1e-10 {
            return self.clone();
        }
        let d = self.dim();
        let mixed = ComplexMatrix::identity(d).scale_real(eps / d as f64);
        Self((&self.0.scale_real(1.0 - eps) + &mixed).hermitian_part())
    }

    /// Trace distance `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &Self) -> f64 {
        trace_distance(&self.0, &other.0)
    }
}

impl AsRef<ComplexMatrix> for DensityMatrix {
    fn as_ref(&self) -> &ComplexMatrix {
        &self.0
    }
}

/// `½‖A − B‖₁` for Hermitian `A`, `B`.
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let diff = (a - b).hermitian_part();
    let eig = herm_eig(&diff).expect("hermitian part is Hermitian");
    0.5 * eig.eigenvalues.iter().map(|x| x.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        (a - b).frobenius_norm() <= tol
    }

    fn random_hermitian(d: usize, seed: u64) -> ComplexMatrix {
        // Small deterministic LCG keeps this test free of the rand crate.
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let g = ComplexMatrix::from_fn(d, d, |_, _| c(next(), next()));
        (&g + &g.adjoint()).scale_real(0.5)
    }

    #[test]
    fn identity_eigenvalues() {
        let e = herm_eig(&ComplexMatrix::identity(2)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0]);
        assert!(close(&e.eigenvectors, &ComplexMatrix::identity(2), 1e-15));
    }

    #[test]
    fn pauli_z_sorted() {
        let z = ComplexMatrix::diag(&[1.0, -1.0]);
        let e = herm_eig(&z).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-15);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-15);
        // eigenvector of -1 is |1⟩ with positive phase
        assert!((e.eigenvectors[(1, 0)] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn reconstruction_and_unitarity() {
        for seed in 0..20 {
            let a = random_hermitian(4, seed);
            let e = herm_eig(&a).unwrap();
            let scale = a.frobenius_norm();
            assert!(close(&e.reconstruct(), &a, 1e-12 * scale));
            let vtv = e.eigenvectors.adjoint().matmul(&e.eigenvectors);
            assert!(close(&vtv, &ComplexMatrix::identity(4), 1e-12));
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn degenerate_block_is_canonical() {
        // Rotate diag(1,1,2) by a unitary that mixes the degenerate block.
        let s = 1.0 / 2f64.sqrt();
        let u = ComplexMatrix::from_row_major(
            3,
            3,
            &[c(s, 0.0), c(0.0, s), c(0.0, 0.0), c(0.0, s), c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        )
        .unwrap();
        let a = u.conjugate(&ComplexMatrix::diag(&[1.0, 1.0, 2.0]));
        let e1 = herm_eig(&a).unwrap();
        let e2 = herm_eig(&ComplexMatrix::diag(&[1.0, 1.0, 2.0])).unwrap();
        // Same operator → same eigenvectors, and the block basis is e0, e1.
        assert!(close(&e1.eigenvectors, &e2.eigenvectors, 1e-12));
        assert!(close(&e1.eigenvectors, &ComplexMatrix::identity(3), 1e-12));
    }

    #[test]
    fn rejects_bad_input() {
        let ns = ComplexMatrix::zeros(2, 3);
        assert!(matches!(herm_eig(&ns), Err(Error::NotSquare(2, 3))));
        let nh = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(herm_eig(&nh), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn powers() {
        let i = ComplexMatrix::identity(3);
        assert!(close(&mat_power(&i, 0.5).unwrap(), &i, 1e-15));
        let d = ComplexMatrix::diag(&[4.0, 1.0]);
        assert!(close(&mat_power(&d, 0.5).unwrap(), &ComplexMatrix::diag(&[2.0, 1.0]), 1e-14));
        for seed in 0..10 {
            let h = random_hermitian(3, 100 + seed);
            let psd = h.matmul(&h.adjoint());
            let r = mat_power(&psd, 0.5).unwrap();
            assert!(close(&r.matmul(&r), &psd, 1e-11 * psd.frobenius_norm().max(1.0)));
        }
        let neg = ComplexMatrix::diag(&[1.0, -0.5]);
        assert!(matches!(mat_power(&neg, 0.5), Err(Error::NotPositive(_))));
    }

    #[test]
    fn pseudo_power_on_support() {
        let p = ComplexMatrix::diag(&[0.5, 0.0]);
        let inv = mat_power(&p, -1.0).unwrap();
        assert!(close(&inv, &ComplexMatrix::diag(&[2.0, 0.0]), 1e-14));
        let proj = mat_power(&p, 0.0).unwrap();
        assert!(close(&proj, &ComplexMatrix::diag(&[1.0, 0.0]), 1e-14));
    }

    #[test]
    fn kron_cases() {
        let i2 = ComplexMatrix::identity(2);
        assert!(close(&kron(&i2, &i2), &ComplexMatrix::identity(4), 0.0));
        let d = ComplexMatrix::diag(&[2.0, 3.0]);
        assert!(close(&kron(&d, &i2), &ComplexMatrix::diag(&[2.0, 2.0, 3.0, 3.0]), 0.0));
        let (a, b, cc, dd) = (
            random_hermitian(2, 1),
            random_hermitian(2, 2),
            random_hermitian(2, 3),
            random_hermitian(2, 4),
        );
        let lhs = kron(&a, &b).matmul(&kron(&cc, &dd));
        let rhs = kron(&a.matmul(&cc), &b.matmul(&dd));
        assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn partial_trace_cases() {
        let rho = ComplexMatrix::diag(&[0.3, 0.7]);
        let sigma = ComplexMatrix::diag(&[0.2, 0.5, 0.3]).scale_real(2.0);
        let joint = kron(&rho, &sigma);
        let kept = partial_trace(&joint, &[2, 3], 0).unwrap();
        assert!(close(&kept, &rho.scale_real(2.0), 1e-14));
        let kept_b = partial_trace(&joint, &[2, 3], 1).unwrap();
        assert!(close(&kept_b, &sigma, 1e-14));

        let s = 1.0 / 2f64.sqrt();
        let bell = [c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)];
        let proj = ComplexMatrix::ket_bra(&bell, &bell);
        let half = ComplexMatrix::identity(2).scale_real(0.5);
        assert!(close(&partial_trace(&proj, &[2, 2], 0).unwrap(), &half, 1e-15));
        assert!(close(&partial_trace(&proj, &[2, 2], 1).unwrap(), &half, 1e-15));

        let r = random_hermitian(6, 9);
        let t = partial_trace(&r, &[2, 3], 0).unwrap();
        assert!((t.trace() - r.trace()).norm() < 1e-12);

        assert!(partial_trace(&r, &[2, 2], 0).is_err());
        assert!(partial_trace(&r, &[2, 3], 2).is_err());
    }

    #[test]
    fn relative_entropy_cases() {
        let rho = ComplexMatrix::diag(&[0.6, 0.4]);
        assert!(relative_entropy(&rho, &rho).unwrap().abs() < 1e-15);
        let pure0 = ComplexMatrix::diag(&[1.0, 0.0]);
        let mixed = ComplexMatrix::identity(2).scale_real(0.5);
        assert!((relative_entropy(&pure0, &mixed).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(relative_entropy(&mixed, &pure0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(ComplexMatrix::diag(&[0.5, 0.6])).is_err());
        assert!(DensityMatrix::new(ComplexMatrix::diag(&[1.2, -0.2])).is_err());
        let rho = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let reg = rho.regularized(1e-8);
        assert!(reg.min_eigenvalue() > 1e-9);
        assert!((reg.matrix().trace().re - 1.0).abs() < 1e-15);
    }
}
