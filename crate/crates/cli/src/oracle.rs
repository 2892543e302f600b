//! Joint probabilities computed without superoperators, by propagating pure
//! states and applying Born-rule projections. Used to cross-check the
//! operator-state engines.

use qfluct_core::closed_ft::ClosedProcess;
use qfluct_core::{herm_eig, ComplexMatrix, DensityMatrix, MeasurementBasis, C64};

fn matvec(a: &ComplexMatrix, v: &[C64]) -> Vec<C64> {
    (0..a.rows())
        .map(|r| (0..a.cols()).map(|c| a[(r, c)] * v[c]).sum())
        .collect()
}

fn braket(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

/// Born-rule joint of a closed process: each eigenvector of `ρ_0` is
/// projected onto `|x_0⟩`, then the amplitude `⟨x_{m+1}|U_m|x_m⟩` is chained
/// along the path; probabilities are mixed with the eigenvalues.
pub fn born_rule_joint(proc: &ClosedProcess, path: &[usize]) -> f64 {
    let eig = herm_eig(proc.rho0().matrix()).expect("density matrix is Hermitian");
    let bases = proc.bases();
    let mut chain = C64::new(1.0, 0.0);
    for (m, u) in proc.unitaries().iter().enumerate() {
        let from = bases[m].ket(path[m]);
        let to = bases[m + 1].ket(path[m + 1]);
        chain *= braket(&to, &matvec(u, &from));
    }
    let x0 = bases[0].ket(path[0]);
    let first: f64 = (0..eig.dim())
        .map(|k| eig.eigenvalues[k] * braket(&x0, &eig.vector(k)).norm_sqr())
        .sum();
    first * chain.norm_sqr()
}

/// Quantum-trajectory joint of a Kraus process: every eigenvector of `ρ_0`
/// and every sequence of Kraus indices is propagated as an unnormalized
/// vector, projected at each time, and its squared norm accumulated.
pub fn kraus_trajectory_joint(
    rho0: &DensityMatrix,
    kraus: &[Vec<ComplexMatrix>],
    bases: &[MeasurementBasis],
    path: &[usize],
) -> f64 {
    let eig = herm_eig(rho0.matrix()).expect("density matrix is Hermitian");
    let project = |t: usize, v: &[C64]| {
        let x = bases[t].ket(path[t]);
        let amp = braket(&x, v);
        x.iter().map(|c| c * amp).collect::<Vec<C64>>()
    };
    let mut total = 0.0;
    for k in 0..eig.dim() {
        let mut frontier = vec![project(0, &eig.vector(k))];
        for (m, ops) in kraus.iter().enumerate() {
            frontier = frontier
                .iter()
                .flat_map(|v| ops.iter().map(move |op| matvec(op, v)))
                .map(|v| project(m + 1, &v))
                .collect();
        }
        let norm: f64 = frontier.iter().map(|v| braket(v, v).re).sum();
        total += eig.eigenvalues[k] * norm;
    }
    total
}
