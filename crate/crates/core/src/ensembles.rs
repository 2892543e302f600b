//! Seeded random instance generators.
//!
//! Every generator takes a `u64` seed and draws all of its randomness from a
//! single `ChaCha8Rng`, so an instance is fully determined by its arguments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channels::{haar_unitary, random_density, random_diagonal_state, random_kraus, MeasurementBasis};
use crate::closed_ft::ClosedProcess;
use crate::linalg::{herm_eig, ComplexMatrix, DensityMatrix, C64};
use crate::markov_ft::MarkovProcess;
use crate::nonmarkov_ft::DilatedProcess;
use crate::opstate::{super_from_kraus, Superoperator};
use crate::{Error, Result};

/// How reference states are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReferencePolicy {
    #[default]
    MaximallyMixed,
    /// Independent Ginibre states.
    Random,
}

impl ReferencePolicy {
    fn draw<R: Rng + ?Sized>(self, d: usize, rng: &mut R) -> DensityMatrix {
        match self {
            ReferencePolicy::MaximallyMixed => DensityMatrix::maximally_mixed(d),
            ReferencePolicy::Random => random_density(d, rng),
        }
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_bases<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Vec<MeasurementBasis> {
    (0..n)
        .map(|_| MeasurementBasis::new(haar_unitary(d, rng)).expect("Haar unitary columns are orthonormal"))
        .collect()
}

/// Random full-rank initial state, Haar unitaries and Haar bases.
pub fn closed_instance(d: usize, n: usize, seed: u64) -> Result<ClosedProcess> {
    let mut rng = rng_for(seed);
    let rho0 = random_density(d, &mut rng);
    let unitaries = (0..n - 1).map(|_| haar_unitary(d, &mut rng)).collect();
    let bases = random_bases(d, n, &mut rng);
    ClosedProcess::new(rho0, unitaries, bases)
}

/// Closed process whose unitaries permute the computational basis up to
/// phases, measured in that basis at every time.
pub fn kolmogorov_instance(d: usize, n: usize, seed: u64) -> Result<ClosedProcess> {
    let mut rng = rng_for(seed);
    let rho0 = random_density(d, &mut rng);
    let unitaries = (0..n - 1)
        .map(|_| {
            let mut perm: Vec<usize> = (0..d).collect();
            for i in (1..d).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let mut u = ComplexMatrix::zeros(d, d);
            for (col, &row) in perm.iter().enumerate() {
                u[(row, col)] = C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
            }
            u
        })
        .collect();
    ClosedProcess::new(rho0, unitaries, vec![MeasurementBasis::computational(d); n])
}

/// Markov process together with the Kraus lists of its steps.
#[derive(Clone, Debug)]
pub struct MarkovInstance {
    pub process: MarkovProcess,
    pub kraus: Vec<Vec<ComplexMatrix>>,
}

/// Random channels from Stinespring dilations with `env_dim`-dimensional
/// ancillas, Haar bases and a random initial state.
pub fn markov_instance(
    d: usize,
    n: usize,
    env_dim: usize,
    policy: ReferencePolicy,
    seed: u64,
) -> Result<MarkovInstance> {
    let mut rng = rng_for(seed);
    let rho0 = random_density(d, &mut rng);
    let kraus: Vec<Vec<ComplexMatrix>> = (0..n - 1).map(|_| random_kraus(d, env_dim, &mut rng)).collect();
    let channels: Vec<Superoperator> = kraus.iter().map(|k| super_from_kraus(k)).collect::<Result<_>>()?;
    let bases = random_bases(d, n, &mut rng);
    let gammas = (0..n - 1).map(|_| policy.draw(d, &mut rng)).collect();
    let process = MarkovProcess::new(rho0, channels, bases, gammas)?;
    Ok(MarkovInstance { process, kraus })
}

/// Structure of the system–environment coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DilationKind {
    /// Haar unitaries on `S ⊗ E`.
    Coupled,
    /// `U_S ⊗ U_E`: no correlations ever form.
    Product,
    /// Coupled unitaries, but every step meets a fresh environment copy.
    Collision,
    /// `SWAP · exp(−iθH)` with small θ; needs `d_E = d_S`.
    SwapDominated,
    /// Trivial one-dimensional environment.
    Closed,
}

/// Parameters of a dilation ensemble.
#[derive(Clone, Copy, Debug)]
pub struct DilationConfig {
    pub d_s: usize,
    pub d_e: usize,
    pub n: usize,
    pub kind: DilationKind,
    pub reference: ReferencePolicy,
    /// Use `γ_0 = ρ_0`.
    pub gamma_is_rho0: bool,
}

impl Default for DilationConfig {
    fn default() -> Self {
        Self {
            d_s: 2,
            d_e: 2,
            n: 3,
            kind: DilationKind::Coupled,
            reference: ReferencePolicy::MaximallyMixed,
            gamma_is_rho0: false,
        }
    }
}

const SWAP_ANGLE: f64 = 0.3;

fn swap(d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d * d, d * d, |r, c| {
        if r == (c % d) * d + c / d {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

fn swap_dominated<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let g = haar_unitary(d * d, rng);
    let mut h = random_density(d * d, rng).into_matrix();
    h = &g.conjugate(&h) - &ComplexMatrix::identity(d * d).scale_real(1.0 / (d * d) as f64);
    let eig = herm_eig(&h.hermitian_part()).expect("Hermitian generator");
    let dim = d * d;
    let mut evolution = ComplexMatrix::zeros(dim, dim);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.vector(k);
        let phase = C64::from_polar(1.0, -SWAP_ANGLE * dim as f64 * l);
        evolution = &evolution + &ComplexMatrix::ket_bra(&v, &v).scale(phase);
    }
    swap(d).matmul(&evolution)
}

/// Rebuilds `proc` with its last basis set to an eigenbasis of `ρ_n`, so the
/// average-EP identity applies.
pub fn align_final_basis(proc: &DilatedProcess) -> Result<DilatedProcess> {
    let mut bases = proc.bases().to_vec();
    let n = bases.len();
    bases[n - 1] = MeasurementBasis::eigenbasis_of(proc.final_state().matrix())?;
    DilatedProcess::new(
        proc.rho0().clone(),
        proc.rho_env().clone(),
        proc.unitaries().to_vec(),
        bases,
        proc.gamma0().clone(),
    )
}

/// Random dilation with `ρ_0` diagonal in the first basis and the last basis
/// aligned with `ρ_n`.
pub fn dilation_instance(cfg: &DilationConfig, seed: u64) -> Result<DilatedProcess> {
    let mut rng = rng_for(seed);
    let d_e = if cfg.kind == DilationKind::Closed { 1 } else { cfg.d_e };
    let (ds, n) = (cfg.d_s, cfg.n);
    if cfg.kind == DilationKind::SwapDominated && ds != d_e {
        return Err(Error::InvalidProcess(format!("swap coupling needs d_E = d_S, got {d_e} and {ds}")));
    }
    let unitaries: Vec<ComplexMatrix> = (0..n - 1)
        .map(|_| match cfg.kind {
            DilationKind::Product => haar_unitary(ds, &mut rng).kron(&haar_unitary(d_e, &mut rng)),
            DilationKind::SwapDominated => swap_dominated(ds, &mut rng),
            _ => haar_unitary(ds * d_e, &mut rng),
        })
        .collect();
    let rho_env = random_density(d_e, &mut rng);
    let bases = random_bases(ds, n, &mut rng);
    let rho0 = random_diagonal_state(&bases[0], &mut rng);
    let gamma0 = if cfg.gamma_is_rho0 {
        rho0.clone()
    } else {
        cfg.reference.draw(ds, &mut rng)
    };
    let mut proc = DilatedProcess::new(rho0, rho_env, unitaries, bases, gamma0)?;
    if cfg.kind == DilationKind::Collision {
        proc = proc.collision_variant()?;
    }
    align_final_basis(&proc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let a = closed_instance(3, 3, 7).unwrap();
        let b = closed_instance(3, 3, 7).unwrap();
        assert_eq!(a.rho0().matrix(), b.rho0().matrix());
        let cfg = DilationConfig::default();
        let x = dilation_instance(&cfg, 11).unwrap();
        let y = dilation_instance(&cfg, 11).unwrap();
        assert_eq!(x.unitaries()[1], y.unitaries()[1]);
    }

    #[test]
    fn swap_coupling_is_unitary_and_near_swap() {
        let mut rng = rng_for(3);
        let v = swap_dominated(2, &mut rng);
        let defect = (&v.adjoint().matmul(&v) - &ComplexMatrix::identity(4)).max_abs();
        assert!(defect < 1e-12);
        assert!((&v - &swap(2)).max_abs() < 1.0);
    }

    #[test]
    fn final_basis_diagonalizes_final_state() {
        let p = dilation_instance(&DilationConfig::default(), 5).unwrap();
        let u = p.bases()[2].kets();
        assert!(u.adjoint().matmul(p.final_state().matrix()).matmul(u).off_diagonal_norm() < 1e-12);
        let c = dilation_instance(&DilationConfig { kind: DilationKind::Collision, ..Default::default() }, 5).unwrap();
        assert_eq!(c.env_dim(), 4);
    }
}
