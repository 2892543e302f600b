//! Measurement bases, reference states, and the special maps used by the
//! backward processes: rescaling maps, Z-factors, Petz recovery, dephasing.
//! Also the seeded random ensembles (Haar unitaries, Stinespring channels,
//! Ginibre states).

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{herm_eig, mat_power, ComplexMatrix, DensityMatrix, HermitianEigensystem, C64};
use crate::opstate::{super_from_kraus, Superoperator};
use crate::{Error, Result};

/// Mixing weight used when a reference state is (numerically) singular.
pub const REGULARIZATION_EPS: f64 = 1e-8;

/// Orthonormal basis `{|x⟩}` defining a rank-one projective measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementBasis {
    /// Column `x` is `|x⟩`.
    kets: ComplexMatrix,
}

impl MeasurementBasis {
    pub fn new(kets: ComplexMatrix) -> Result<Self> {
        if !kets.is_square() {
            return Err(Error::NotSquare(kets.rows(), kets.cols()));
        }
        let gram = kets.adjoint().matmul(&kets);
        let defect = (&gram - &ComplexMatrix::identity(kets.rows())).max_abs();
        if defect > 1e-12 {
            return Err(Error::NotUnitary(defect));
        }
        Ok(Self { kets })
    }

    pub fn computational(d: usize) -> Self {
        Self {
            kets: ComplexMatrix::identity(d),
        }
    }

    /// Eigenbasis of a Hermitian matrix in canonical order.
    pub fn eigenbasis_of(a: &ComplexMatrix) -> Result<Self> {
        Ok(Self {
            kets: herm_eig(a)?.eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.kets.rows()
    }

    pub fn kets(&self) -> &ComplexMatrix {
        &self.kets
    }

    pub fn ket(&self, x: usize) -> Vec<C64> {
        self.kets.column(x)
    }

    /// `Π^x = |x⟩⟨x|`.
    pub fn projector(&self, x: usize) -> ComplexMatrix {
        let v = self.ket(x);
        ComplexMatrix::ket_bra(&v, &v)
    }

    /// `|a⟩⟨b|` in this basis.
    pub fn unit(&self, a: usize, b: usize) -> ComplexMatrix {
        ComplexMatrix::ket_bra(&self.ket(a), &self.ket(b))
    }

    /// `⟨x|ρ|x⟩` as a real number.
    pub fn population(&self, rho: &ComplexMatrix, x: usize) -> f64 {
        let v = self.ket(x);
        rho.sandwich(&v, &v).re
    }

    /// Outcome probabilities `⟨x|ρ|x⟩`.
    pub fn populations(&self, rho: &ComplexMatrix) -> Vec<f64> {
        (0..self.dim()).map(|x| self.population(rho, x)).collect()
    }

    /// `Σ_x Π^x ρ Π^x`.
    pub fn dephase(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim(), self.dim());
        for x in 0..self.dim() {
            let p = self.projector(x);
            out = &out + &p.matmul(rho).matmul(&p);
        }
        out
    }

    /// Eigensystem of an operator assumed diagonal in this basis, keeping the
    /// basis order (eigenvalues are the diagonal entries, not re-sorted).
    pub fn as_eigensystem(&self, diagonal_operator: &ComplexMatrix) -> HermitianEigensystem {
        HermitianEigensystem {
            eigenvalues: self.populations(diagonal_operator),
            eigenvectors: self.kets.clone(),
        }
    }
}

/// Reference state of one step and its image, with the eigenbases that label
/// the quasi indices `(i, j)` and `(k′, l′)`.
#[derive(Clone, Debug)]
pub struct ReferencePair {
    pub gamma: DensityMatrix,
    pub gamma_out: DensityMatrix,
    pub i_basis: HermitianEigensystem,
    pub k_basis: HermitianEigensystem,
}

impl ReferencePair {
    /// Regularizes `gamma` if needed, pushes it through `channel`, and
    /// diagonalizes both with the canonical eigensolver.
    pub fn new(gamma: &DensityMatrix, channel: &Superoperator) -> Result<Self> {
        let gamma = gamma.regularized(REGULARIZATION_EPS);
        let gamma_out = DensityMatrix::new(channel.apply(gamma.matrix()).hermitian_part())?;
        let i_basis = gamma.eigensystem();
        let k_basis = gamma_out.eigensystem();
        if k_basis.min_eigenvalue() <= 0.0 {
            return Err(Error::SupportViolation(
                "channel output of the reference state is singular; regularize gamma".into(),
            ));
        }
        Ok(Self {
            gamma,
            gamma_out,
            i_basis,
            k_basis,
        })
    }

    /// Uses caller-supplied eigensystems (e.g. aligned with a measurement
    /// basis when the state is degenerate).
    pub fn with_bases(
        gamma: DensityMatrix,
        gamma_out: DensityMatrix,
        i_basis: HermitianEigensystem,
        k_basis: HermitianEigensystem,
    ) -> Self {
        Self {
            gamma,
            gamma_out,
            i_basis,
            k_basis,
        }
    }

    /// `½(ln n_k + ln n_l − ln g_i − ln g_j)`, the log of the Z-factor pair.
    pub fn log_z(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let g = &self.i_basis.eigenvalues;
        let n = &self.k_basis.eigenvalues;
        0.5 * (n[k].ln() + n[l].ln() - g[i].ln() - g[j].ln())
    }
}

/// `X ↦ O^α X O^α`.
pub fn rescaling_map(o: &ComplexMatrix, alpha: f64) -> Result<Superoperator> {
    let p = mat_power(o, alpha)?;
    super_from_kraus(&[p])
}

/// `Z^{γ^α}_{ij} = √(g_i^α g_j^α)` with `g` the eigenvalues of γ in canonical
/// (ascending) order.
pub fn z_factor(gamma: &DensityMatrix, alpha: f64, i: usize, j: usize) -> Result<f64> {
    let g = gamma.eigensystem().eigenvalues;
    let d = g.len();
    for idx in [i, j] {
        if idx >= d {
            return Err(Error::InvalidIndex { index: idx, bound: d });
        }
    }
    let cutoff = crate::linalg::RANK_CUTOFF * g[d - 1];
    if alpha < 0.0 && (g[i] <= cutoff || g[j] <= cutoff) {
        return Err(Error::SupportViolation(format!(
            "zero eigenvalue in Z-factor with alpha = {alpha}"
        )));
    }
    Ok((g[i].powf(alpha) * g[j].powf(alpha)).sqrt())
}

/// Petz recovery map `J^{1/2}_γ ∘ N† ∘ J^{−1/2}_{N(γ)}`.
pub fn petz_recovery(channel: &Superoperator, gamma: &DensityMatrix) -> Result<Superoperator> {
    if gamma.dim() != channel.in_dim() {
        return Err(Error::DimensionMismatch {
            expected: channel.in_dim(),
            found: gamma.dim(),
        });
    }
    let out = channel.apply(gamma.matrix()).hermitian_part();
    let eig = herm_eig(&out)?;
    if eig.min_eigenvalue() < 1e-10 * eig.max_eigenvalue() {
        return Err(Error::SupportViolation(
            "N(gamma) is rank deficient; regularize gamma before building the Petz map".into(),
        ));
    }
    let pre = rescaling_map(&out, -0.5)?;
    let post = rescaling_map(gamma.matrix(), 0.5)?;
    post.compose(&channel.adjoint())?.compose(&pre)
}

/// Largest violation of `(Π_{k′l′}|N|Π_{ij})^* = Z^{γ^{−1}}_{ij} Z^{N(γ)}_{k′l′} (Π_{ij}|R|Π_{k′l′})`
/// over the eigen-matrix units of `pair`.
pub fn petz_transpose_defect(channel: &Superoperator, recovery: &Superoperator, pair: &ReferencePair) -> f64 {
    let (ib, kb) = (&pair.i_basis, &pair.k_basis);
    let (din, dout) = (ib.dim(), kb.dim());
    let mut worst: f64 = 0.0;
    for i in 0..din {
        for j in 0..din {
            let pij = ComplexMatrix::ket_bra(&ib.vector(i), &ib.vector(j));
            for k in 0..dout {
                for l in 0..dout {
                    let pkl = ComplexMatrix::ket_bra(&kb.vector(k), &kb.vector(l));
                    let lhs = channel.sandwich(&pkl, &pij).conj();
                    let z = (pair.log_z(i, j, k, l)).exp();
                    let rhs = recovery.sandwich(&pij, &pkl) * z;
                    worst = worst.max((lhs - rhs).norm());
                }
            }
        }
    }
    worst
}

/// `ρ ↦ Σ_x Π^x ρ Π^x`.
pub fn dephasing_map(basis: &MeasurementBasis) -> Superoperator {
    let ks: Vec<ComplexMatrix> = (0..basis.dim()).map(|x| basis.projector(x)).collect();
    super_from_kraus(&ks).expect("projectors share a shape")
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar unitary: QR of a complex Ginibre matrix, columns rephased by the
/// signs of R's diagonal.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let z = gaussian_matrix(d, d, rng);
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..d {
        let rc = r[(c, c)];
        let phase = if rc.norm() > 0.0 { rc / rc.norm() } else { C64::new(1.0, 0.0) };
        for row in 0..d {
            q[(row, c)] *= phase;
        }
    }
    ComplexMatrix::from_nalgebra(q)
}

pub fn random_unitary(d: usize, seed: u64) -> ComplexMatrix {
    haar_unitary(d, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Kraus operators `K_e = (I ⊗ ⟨e|) U (I ⊗ |0⟩)` of a Haar Stinespring
/// dilation with an `env_dim`-dimensional environment.
pub fn random_kraus<R: Rng + ?Sized>(d: usize, env_dim: usize, rng: &mut R) -> Vec<ComplexMatrix> {
    let u = haar_unitary(d * env_dim, rng);
    (0..env_dim)
        .map(|e| ComplexMatrix::from_fn(d, d, |a, b| u[(a * env_dim + e, b * env_dim)]))
        .collect()
}

/// `ρ ↦ Tr_E[U(ρ ⊗ |0⟩⟨0|)U†]` for Haar `U`.
pub fn random_channel(d: usize, env_dim: usize, seed: u64) -> Superoperator {
    let ks = random_kraus(d, env_dim, &mut ChaCha8Rng::seed_from_u64(seed));
    super_from_kraus(&ks).expect("Kraus operators share a shape")
}

/// Full-rank random state `GG†/Tr(GG†)` with Ginibre `G`.
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    let g = ComplexMatrix::from_nalgebra(gaussian_matrix(d, d, rng));
    DensityMatrix::normalized(g.matmul(&g.adjoint()).hermitian_part())
        .expect("Ginibre product is PSD with positive trace")
}

/// Random state diagonal in `basis` with flat-Dirichlet populations.
pub fn random_diagonal_state<R: Rng + ?Sized>(basis: &MeasurementBasis, rng: &mut R) -> DensityMatrix {
    let w: Vec<f64> = (0..basis.dim())
        .map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln())
        .collect();
    let total: f64 = w.iter().sum();
    let mut m = ComplexMatrix::zeros(basis.dim(), basis.dim());
    for (x, wx) in w.iter().enumerate() {
        m = &m + &basis.projector(x).scale_real(wx / total);
    }
    DensityMatrix::new(m.hermitian_part()).expect("convex mixture of projectors")
}
