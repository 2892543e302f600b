//! Non-Markovian processes from an explicit system–environment dilation.
//!
//! The joint register is `S ⊗ E` with the system factor first. Step `m`
//! applies `unitaries[m]` to the register; system measurements at interior
//! times are folded into the dynamics as dephasings, so the process is a
//! single multitime map rather than a chain of CPTP steps. Quasi outcomes and
//! flat keys follow the Markov layout (see [`crate::markov_ft`]).
//!
//! Nothing of size `d^{2n}` is materialized: every multitime quantity is a
//! sequential contraction over the register.

use crate::channels::MeasurementBasis;
use crate::closed_ft::{log_ratio, real_probability, ZERO_WEIGHT};
use crate::linalg::{mat_power, partial_trace, relative_entropy, ComplexMatrix, DensityMatrix, HermitianEigensystem, C64};
use crate::markov_ft::{first_marginal_positions, last_marginal_positions, MarkovProcess, QuasiOutcome};
use crate::channels::{ReferencePair, REGULARIZATION_EPS};
use crate::opstate::Superoperator;
use crate::outcome::{relative_violation, Lattice, OutcomeDistribution};
use crate::{Error, Result};

const UNITARITY_TOL: f64 = 1e-11;

/// Per-step quasi indices `(i, j, k′, l′)`.
pub type StepIndices = (usize, usize, usize, usize);

/// Reference states along the process and the bases labelling quasi indices.
///
/// Entry `m` belongs to step `m`: `gamma_in[m]` feeds it and `gamma_out[m]`
/// is its output at time `m + 1`. Outputs at measured times are dephased in
/// that time's basis and use it as their eigenbasis.
#[derive(Clone, Debug)]
pub struct GammaTrajectory {
    pub gamma_in: Vec<DensityMatrix>,
    pub gamma_out: Vec<DensityMatrix>,
    pub in_bases: Vec<HermitianEigensystem>,
    pub out_bases: Vec<HermitianEigensystem>,
}

impl GammaTrajectory {
    pub fn log_z(&self, m: usize, (i, j, k, l): StepIndices) -> f64 {
        let g = &self.in_bases[m].eigenvalues;
        let n = &self.out_bases[m].eigenvalues;
        0.5 * (n[k].ln() + n[l].ln() - g[i].ln() - g[j].ln())
    }
}

/// Environment operator left after contracting a history of quasi inputs
/// and outputs.
#[derive(Clone, Debug)]
pub struct ConditionalEnvState {
    pub history: Vec<StepIndices>,
    /// Unnormalized environment operator.
    pub raw: ComplexMatrix,
    /// System amplitude `Tr raw`.
    pub amplitude: C64,
    /// `raw / amplitude`; `None` when the amplitude vanishes.
    pub sigma: Option<ComplexMatrix>,
}

/// Everything the non-Markovian checks report for one dilation.
#[derive(Clone, Debug, Default)]
pub struct NonMarkovReport {
    pub forward_total: C64,
    pub backward_total: C64,
    /// `|Σ_quasi W_f − P(x)|` against the dephased projective joint.
    pub forward_marginal_deviation: f64,
    /// Dephased vs. undephased projective joints.
    pub dephasing_deviation: f64,
    /// Largest imaginary part of the backward projective marginal.
    pub backward_marginal_imag: f64,
    /// Full-process pointwise FT over outcomes with both weights above
    /// `1e-13`.
    pub pointwise_violation: f64,
    /// Pointwise FT for the history-dependent last-marginal EP.
    pub history_r1_violation: f64,
    /// Largest weight on a history whose conditional state is undefined.
    pub undefined_history_weight: f64,
    /// Pointwise FT for the last-two-times marginal.
    pub marginal_r2_violation: f64,
    pub avg_r: C64,
    /// `S(ρ_0‖γ_0) − S(ρ_n‖γ′_n)`.
    pub avg_r_formula: f64,
    pub avg_r1_history: C64,
    pub avg_r1_prime: C64,
    /// `Re(⟨R⟩ − ⟨R1⟩)` with the history-dependent `R1`.
    pub rate_history: f64,
    /// `Re(⟨R⟩ − ⟨R′1⟩)`.
    pub rate_prime: f64,
    /// Summed trace condition on conditional environment states.
    pub tpc_defect: f64,
}

/// `n`-time dilated process.
#[derive(Clone, Debug)]
pub struct DilatedProcess {
    rho0: DensityMatrix,
    rho_env: DensityMatrix,
    unitaries: Vec<ComplexMatrix>,
    bases: Vec<MeasurementBasis>,
    gamma0: DensityMatrix,
    d_s: usize,
    d_e: usize,
    rho_n: DensityMatrix,
    rho_tilde0: DensityMatrix,
    trajectory: GammaTrajectory,
}

impl DilatedProcess {
    /// Backward initial state defaults to `ρ_n`, the final system state of
    /// the measurement-incorporated forward process.
    pub fn new(
        rho0: DensityMatrix,
        rho_env: DensityMatrix,
        unitaries: Vec<ComplexMatrix>,
        bases: Vec<MeasurementBasis>,
        gamma0: DensityMatrix,
    ) -> Result<Self> {
        let n = bases.len();
        if n < 2 {
            return Err(Error::InvalidProcess(format!("need at least 2 times, got {n}")));
        }
        if unitaries.len() != n - 1 {
            return Err(Error::InvalidProcess(format!("{} unitaries for {n} times", unitaries.len())));
        }
        let (d_s, d_e) = (rho0.dim(), rho_env.dim());
        if gamma0.dim() != d_s {
            return Err(Error::DimensionMismatch { expected: d_s, found: gamma0.dim() });
        }
        for b in &bases {
            if b.dim() != d_s {
                return Err(Error::DimensionMismatch { expected: d_s, found: b.dim() });
            }
        }
        let dd = d_s * d_e;
        for u in &unitaries {
            if u.rows() != dd || u.cols() != dd {
                return Err(Error::DimensionMismatch { expected: dd, found: u.rows() });
            }
            let defect = (&u.adjoint().matmul(u) - &ComplexMatrix::identity(dd)).max_abs();
            if defect > UNITARITY_TOL {
                return Err(Error::NotUnitary(defect));
            }
        }
        let mut proc = Self {
            rho0: rho0.clone(),
            rho_env,
            unitaries,
            bases,
            gamma0: gamma0.regularized(REGULARIZATION_EPS),
            d_s,
            d_e,
            rho_n: rho0.clone(),
            rho_tilde0: rho0,
            trajectory: GammaTrajectory {
                gamma_in: vec![],
                gamma_out: vec![],
                in_bases: vec![],
                out_bases: vec![],
            },
        };
        let last = proc.system_states(proc.rho0.matrix(), false).pop().expect("n >= 2");
        proc.rho_n = DensityMatrix::new(last.hermitian_part())?;
        proc.rho_tilde0 = proc.rho_n.clone();
        proc.trajectory = proc.build_trajectory()?;
        Ok(proc)
    }

    pub fn with_backward_initial(mut self, rho_tilde0: DensityMatrix) -> Result<Self> {
        if rho_tilde0.dim() != self.d_s {
            return Err(Error::DimensionMismatch { expected: self.d_s, found: rho_tilde0.dim() });
        }
        self.rho_tilde0 = rho_tilde0;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.bases.len()
    }

    pub fn system_dim(&self) -> usize {
        self.d_s
    }

    pub fn env_dim(&self) -> usize {
        self.d_e
    }

    pub fn rho0(&self) -> &DensityMatrix {
        &self.rho0
    }

    pub fn rho_env(&self) -> &DensityMatrix {
        &self.rho_env
    }

    pub fn unitaries(&self) -> &[ComplexMatrix] {
        &self.unitaries
    }

    pub fn bases(&self) -> &[MeasurementBasis] {
        &self.bases
    }

    pub fn gamma0(&self) -> &DensityMatrix {
        &self.gamma0
    }

    /// `ρ_n`.
    pub fn final_state(&self) -> &DensityMatrix {
        &self.rho_n
    }

    pub fn backward_initial(&self) -> &DensityMatrix {
        &self.rho_tilde0
    }

    pub fn gamma_trajectory(&self) -> &GammaTrajectory {
        &self.trajectory
    }

    pub fn key_len(&self) -> usize {
        self.n() + 4 * (self.n() - 1)
    }

    fn embed_system(&self, a: &ComplexMatrix) -> ComplexMatrix {
        a.kron(&ComplexMatrix::identity(self.d_e))
    }

    /// Dephases the system factor of a register operator.
    fn dephase_system(&self, basis: &MeasurementBasis, s: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(s.rows(), s.cols());
        for x in 0..self.d_s {
            let p = self.embed_system(&basis.projector(x));
            out = &out + &p.matmul(s).matmul(&p);
        }
        out
    }

    /// Whether the system output of step `m` is measured (dephased).
    fn output_measured(&self, m: usize) -> bool {
        m + 2 < self.n()
    }

    /// Register evolution from `initial ⊗ ρ_E` with dephasing at every
    /// interior time (and at time 0 if `dephase_initial`). Returns the
    /// reduced system state at each time before that time's dephasing.
    pub fn system_states(&self, initial: &ComplexMatrix, dephase_initial: bool) -> Vec<ComplexMatrix> {
        let start = if dephase_initial {
            self.bases[0].dephase(initial)
        } else {
            initial.clone()
        };
        let mut s = start.kron(self.rho_env.matrix());
        let mut out = vec![initial.clone()];
        for (m, v) in self.unitaries.iter().enumerate() {
            if m >= 1 {
                s = self.dephase_system(&self.bases[m], &s);
            }
            s = v.conjugate(&s);
            out.push(self.reduce_to_system(&s));
        }
        out
    }

    fn reduce_to_system(&self, s: &ComplexMatrix) -> ComplexMatrix {
        partial_trace(s, &[self.d_s, self.d_e], 0).expect("register dimensions")
    }

    fn build_trajectory(&self) -> Result<GammaTrajectory> {
        let n = self.n();
        let raw = self.system_states(self.gamma0.matrix(), false);
        let mut gamma_out = Vec::with_capacity(n - 1);
        let mut out_bases = Vec::with_capacity(n - 1);
        for m in 0..n - 1 {
            let slot = m + 1;
            if self.output_measured(m) {
                let g = DensityMatrix::new(self.bases[slot].dephase(&raw[slot]).hermitian_part())?
                    .regularized(REGULARIZATION_EPS);
                out_bases.push(self.bases[slot].as_eigensystem(g.matrix()));
                gamma_out.push(g);
            } else {
                let g = DensityMatrix::new(raw[slot].hermitian_part())?.regularized(REGULARIZATION_EPS);
                out_bases.push(g.eigensystem());
                gamma_out.push(g);
            }
        }
        let mut gamma_in = vec![self.gamma0.clone()];
        let mut in_bases = vec![self.gamma0.eigensystem()];
        for m in 1..n - 1 {
            gamma_in.push(gamma_out[m - 1].clone());
            in_bases.push(out_bases[m - 1].clone());
        }
        Ok(GammaTrajectory {
            gamma_in,
            gamma_out,
            in_bases,
            out_bases,
        })
    }

    fn check_path(&self, x: &[usize]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: x.len() });
        }
        if let Some(&bad) = x.iter().find(|&&v| v >= self.d_s) {
            return Err(Error::InvalidIndex { index: bad, bound: self.d_s });
        }
        Ok(())
    }

    fn projective_joint(&self, x: &[usize], dephase: bool) -> Result<f64> {
        self.check_path(x)?;
        let p0 = self.bases[0].projector(x[0]);
        let mut s = p0.matmul(self.rho0.matrix()).matmul(&p0).kron(self.rho_env.matrix());
        for (m, v) in self.unitaries.iter().enumerate() {
            s = v.conjugate(&s);
            if dephase && self.output_measured(m) {
                s = self.dephase_system(&self.bases[m + 1], &s);
            }
            let p = self.embed_system(&self.bases[m + 1].projector(x[m + 1]));
            s = p.matmul(&s).matmul(&p);
        }
        real_probability(s.trace())
    }

    /// Joint probability of the measurement-incorporated process.
    pub fn forward_with_dephasing(&self, x: &[usize]) -> Result<f64> {
        self.projective_joint(x, true)
    }

    /// Joint probability with the dephasings left out; equal to
    /// [`Self::forward_with_dephasing`] because each dephasing is followed by
    /// a projection in the same basis.
    pub fn forward_joint(&self, x: &[usize]) -> Result<f64> {
        self.projective_joint(x, false)
    }

    /// Environment operator after feeding `inputs[m]` to the system at step
    /// `m` and contracting its output with `effects[m]`:
    /// `e ← Tr_S[(B_m† ⊗ I) D(V_m (A_m ⊗ e) V_m†)]`, with `D` the system
    /// dephasing at measured times.
    pub fn env_after(&self, inputs: &[ComplexMatrix], effects: &[ComplexMatrix]) -> ComplexMatrix {
        let mut e = self.rho_env.matrix().clone();
        for (m, (a, b)) in inputs.iter().zip(effects).enumerate() {
            let mut s = self.unitaries[m].conjugate(&a.kron(&e));
            if self.output_measured(m) {
                s = self.dephase_system(&self.bases[m + 1], &s);
            }
            e = self.contract_system(b, &s);
        }
        e
    }

    /// `Tr_S[(B† ⊗ I) s]`.
    fn contract_system(&self, b: &ComplexMatrix, s: &ComplexMatrix) -> ComplexMatrix {
        let (ds, de) = (self.d_s, self.d_e);
        ComplexMatrix::from_fn(de, de, |a, c| {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..ds {
                for u in 0..ds {
                    acc += b[(t, u)].conj() * s[(t * de + a, u * de + c)];
                }
            }
            acc
        })
    }

    fn quasi_units(&self, q: &QuasiOutcome, steps: usize) -> (Vec<ComplexMatrix>, Vec<ComplexMatrix>) {
        let tr = &self.trajectory;
        let inputs = (0..steps)
            .map(|m| ComplexMatrix::ket_bra(&tr.in_bases[m].vector(q.i[m]), &tr.in_bases[m].vector(q.j[m])))
            .collect();
        let effects = (0..steps)
            .map(|m| ComplexMatrix::ket_bra(&tr.out_bases[m].vector(q.kp[m]), &tr.out_bases[m].vector(q.lp[m])))
            .collect();
        (inputs, effects)
    }

    /// `Π_m (Π_ij|Π^{x_m}) (Π^{x_{m+1}}|Π_kl)`: the projective factors that
    /// forward and backward weights share.
    fn projective_factors(&self, q: &QuasiOutcome) -> C64 {
        let tr = &self.trajectory;
        let mut w = C64::new(1.0, 0.0);
        for m in 0..self.n() - 1 {
            let xi = self.bases[m].ket(q.x[m]);
            let xo = self.bases[m + 1].ket(q.x[m + 1]);
            let (vi, vj) = (tr.in_bases[m].vector(q.i[m]), tr.in_bases[m].vector(q.j[m]));
            let (vk, vl) = (tr.out_bases[m].vector(q.kp[m]), tr.out_bases[m].vector(q.lp[m]));
            w *= dot(&vi, &xi) * dot(&xi, &vj) * dot(&xo, &vk) * dot(&vl, &xo);
        }
        w
    }

    /// `(⊗Π_{k′l′}|N_M|⊗Π_{ij})`.
    pub fn comb_element(&self, q: &QuasiOutcome) -> C64 {
        let (a, b) = self.quasi_units(q, self.n() - 1);
        self.env_after(&a, &b).trace()
    }

    /// Forward quasiprobability.
    pub fn quasi_forward(&self, q: &QuasiOutcome) -> C64 {
        let p1 = self.bases[0].population(self.rho0.matrix(), q.x[0]);
        self.projective_factors(q) * self.comb_element(q) * p1
    }

    /// `(⊗J^{−1/2}_{γ′_m}Π_{k′l′}|N_M|⊗J^{1/2}_{γ_m}Π_{ij})`, the conjugate of
    /// the recovery element `(⊗Π_{ij}|(⊗J^{1/2}_{γ_m}) ∘ N_M† ∘ (⊗J^{−1/2}_{γ′_m})|⊗Π_{k′l′})`.
    /// The rescalings are applied as matrix products.
    pub fn rescaled_comb_element(&self, q: &QuasiOutcome) -> C64 {
        let n = self.n();
        let tr = &self.trajectory;
        let (a, b) = self.quasi_units(q, n - 1);
        let mut inputs = Vec::with_capacity(n - 1);
        let mut effects = Vec::with_capacity(n - 1);
        for m in 0..n - 1 {
            let up = mat_power(tr.gamma_in[m].matrix(), 0.5).expect("regularized reference");
            let down = mat_power(tr.gamma_out[m].matrix(), -0.5).expect("regularized reference");
            inputs.push(up.matmul(&a[m]).matmul(&up));
            effects.push(down.matmul(&b[m]).matmul(&down));
        }
        self.env_after(&inputs, &effects).trace()
    }

    /// Backward quasiprobability of the global recovery map, conjugated to
    /// pair with the forward weight.
    pub fn backward_quasi_nonmarkov(&self, q: &QuasiOutcome) -> C64 {
        let recovery = self.rescaled_comb_element(q).conj();
        let pn = self.pn(q.x[self.n() - 1]);
        (self.projective_factors(q).conj() * recovery * pn).conj()
    }

    /// Forward and backward quasidistributions over the full lattice.
    pub fn quasi_distributions(&self) -> (OutcomeDistribution, OutcomeDistribution) {
        let n = self.n();
        let d = self.d_s;
        let steps_len = 4 * (n - 1);
        let mut fwd = OutcomeDistribution::new();
        let mut bwd = OutcomeDistribution::new();
        // Combs depend only on quasi indices; evaluate each once.
        let combs: Vec<(C64, C64)> = Lattice::uniform(d, steps_len)
            .map(|steps| {
                let mut key = vec![0; n];
                key.extend(steps);
                let q = QuasiOutcome::from_key(&key, n);
                (self.comb_element(&q), self.rescaled_comb_element(&q))
            })
            .collect();
        for xs in Lattice::uniform(d, n) {
            for (idx, steps) in Lattice::uniform(d, steps_len).enumerate() {
                let mut key = xs.clone();
                key.extend(steps);
                let q = QuasiOutcome::from_key(&key, n);
                let pf = self.projective_factors(&q);
                let (cf, cb) = combs[idx];
                fwd.insert(key.clone(), self.p1(q.x[0]) * pf * cf);
                bwd.insert(key, self.pn(q.x[n - 1]) * pf * cb);
            }
        }
        (fwd, bwd)
    }

    fn p1(&self, x: usize) -> f64 {
        self.bases[0].population(self.rho0.matrix(), x)
    }

    fn pn(&self, x: usize) -> f64 {
        self.bases[self.n() - 1].population(self.rho_tilde0.matrix(), x)
    }

    /// `R = ln[(Π^{x_0}|ρ_0)/(Π^{x_{n−1}}|ρ̃_0)] + Σ_m ln(Z^{γ_m^{−1}}_{ij} Z^{γ′_m}_{k′l′})`.
    pub fn ep_nonmarkov_full(&self, q: &QuasiOutcome) -> Option<f64> {
        let n = self.n();
        let base = log_ratio(self.p1(q.x[0]), self.pn(q.x[n - 1]))?;
        Some(base + (0..n - 1).map(|m| self.trajectory.log_z(m, q.step(m))).sum::<f64>())
    }

    /// Average EP by enumeration of the forward quasidistribution.
    pub fn avg_ep(&self) -> C64 {
        let (fwd, _) = self.quasi_distributions();
        self.average(&fwd, |q| self.ep_nonmarkov_full(q).map(|r| C64::new(r, 0.0)))
    }

    /// `S(ρ_0‖γ_0) − S(ρ_n‖γ′_n)`; matches [`Self::avg_ep`] when `ρ̃_0 = ρ_n`,
    /// `ρ_0` is diagonal in the first basis and `ρ_n` in the last.
    pub fn avg_ep_formula(&self) -> Result<f64> {
        let n = self.n();
        let a = relative_entropy(self.rho0.matrix(), self.gamma0.matrix())?;
        let b = relative_entropy(self.rho_n.matrix(), self.trajectory.gamma_out[n - 2].matrix())?;
        Ok(a - b)
    }

    fn average(&self, fwd: &OutcomeDistribution, ep: impl Fn(&QuasiOutcome) -> Option<C64>) -> C64 {
        let n = self.n();
        let mut acc = C64::new(0.0, 0.0);
        for (key, w) in fwd.iter() {
            if w.norm() == 0.0 {
                continue;
            }
            if let Some(r) = ep(&QuasiOutcome::from_key(key, n)) {
                acc += w * r;
            }
        }
        acc
    }

    /// Conditional environment operator after a history of quasi indices.
    pub fn conditional_env_states(&self, history: &[StepIndices]) -> ConditionalEnvState {
        let tr = &self.trajectory;
        let inputs: Vec<ComplexMatrix> = history
            .iter()
            .enumerate()
            .map(|(m, &(i, j, _, _))| ComplexMatrix::ket_bra(&tr.in_bases[m].vector(i), &tr.in_bases[m].vector(j)))
            .collect();
        let effects: Vec<ComplexMatrix> = history
            .iter()
            .enumerate()
            .map(|(m, &(_, _, k, l))| ComplexMatrix::ket_bra(&tr.out_bases[m].vector(k), &tr.out_bases[m].vector(l)))
            .collect();
        let raw = self.env_after(&inputs, &effects);
        let amplitude = raw.trace();
        let sigma = (amplitude.norm() > ZERO_WEIGHT).then(|| raw.scale(amplitude.inv()));
        ConditionalEnvState {
            history: history.to_vec(),
            raw,
            amplitude,
            sigma,
        }
    }

    /// Largest `|Σ_{k′} Tr σ(i, j, k′) − Π_m δ_{i_m j_m}|` over histories of
    /// `steps` steps, with the output pairs diagonal (`l′ = k′`).
    pub fn tpc_defect(&self, steps: usize) -> f64 {
        let d = self.d_s;
        let mut worst: f64 = 0.0;
        for ij in Lattice::uniform(d, 2 * steps) {
            let target = if (0..steps).all(|m| ij[2 * m] == ij[2 * m + 1]) { 1.0 } else { 0.0 };
            let mut total = C64::new(0.0, 0.0);
            for ks in Lattice::uniform(d, steps) {
                let history: Vec<StepIndices> = (0..steps).map(|m| (ij[2 * m], ij[2 * m + 1], ks[m], ks[m])).collect();
                total += self.conditional_env_states(&history).amplitude;
            }
            worst = worst.max((total - target).norm());
        }
        worst
    }

    /// `ρ̃_1` for a history of the first `n − 2` steps:
    /// `J^{1/2}_{γ_{n−2}} N_σ^*(J^{−1/2}_{γ′_{n−2}}(M_{n−1} ρ̃_0))`, where `N_σ`
    /// is the last step with the environment in the conditional state σ and
    /// `N_σ^*` its Heisenberg dual. `None` if σ is undefined.
    pub fn history_rho_tilde1(&self, history: &[StepIndices]) -> Option<ComplexMatrix> {
        let n = self.n();
        let sigma = self.conditional_env_states(history).sigma?;
        let last = n - 2;
        let tr = &self.trajectory;
        let down = mat_power(tr.gamma_out[last].matrix(), -0.5).ok()?;
        let up = mat_power(tr.gamma_in[last].matrix(), 0.5).ok()?;
        let y = down
            .matmul(&self.bases[n - 1].dephase(self.rho_tilde0.matrix()))
            .matmul(&down);
        let d = self.d_s;
        let v = &self.unitaries[last];
        // N_σ^*(Y)[i, j] = Tr(Y · N_σ(|j⟩⟨i|))
        let dual = ComplexMatrix::from_fn(d, d, |i, j| {
            let mut unit = ComplexMatrix::zeros(d, d);
            unit[(j, i)] = C64::new(1.0, 0.0);
            let out = self.reduce_to_system(&v.conjugate(&unit.kron(&sigma)));
            y.matmul(&out).trace()
        });
        Some(up.matmul(&dual).matmul(&up))
    }

    /// History-dependent `R1` on a key laid out by
    /// [`last_marginal_positions`]. Complex in general: the conditional
    /// environment state of an off-diagonal history is not Hermitian.
    pub fn ep_marginal_history(&self, key: &[usize]) -> Option<C64> {
        let n = self.n();
        let history: Vec<StepIndices> = (0..n - 2)
            .map(|m| {
                let b = n - 1 + 4 * m;
                (key[b], key[b + 1], key[b + 2], key[b + 3])
            })
            .collect();
        let rt1 = self.history_rho_tilde1(&history)?;
        let v = self.bases[n - 2].ket(key[n - 2]);
        let pop = rt1.sandwich(&v, &v);
        let p1 = self.p1(key[0]);
        if p1 <= 0.0 || pop.norm() == 0.0 {
            return None;
        }
        let z: f64 = history.iter().enumerate().map(|(m, &s)| self.trajectory.log_z(m, s)).sum();
        Some(C64::new(p1.ln() + z, 0.0) - pop.ln())
    }

    /// State at time `n − 2` of the forward process with every measurement
    /// (including the first) applied as a dephasing.
    pub fn rho_before_last(&self) -> ComplexMatrix {
        let n = self.n();
        self.system_states(self.rho0.matrix(), true)[n - 2].clone()
    }

    /// `R2` for the last two times on a key laid out by
    /// [`first_marginal_positions`].
    pub fn ep_marginal_last_two(&self, key: &[usize]) -> Option<f64> {
        let n = self.n();
        let base = log_ratio(
            self.bases[n - 2].population(&self.rho_before_last(), key[0]),
            self.pn(key[1]),
        )?;
        Some(base + self.trajectory.log_z(n - 2, (key[2], key[3], key[4], key[5])))
    }

    /// `R′1 = ln[(Π^{x_0}|ρ_0)/(Π^{x_{n−2}}|ρ_{n−2})] + Σ_{m<n−2} ln Z`.
    pub fn ep_r1_prime(&self, q: &QuasiOutcome) -> Option<f64> {
        let n = self.n();
        let base = log_ratio(
            self.p1(q.x[0]),
            self.bases[n - 2].population(&self.rho_before_last(), q.x[n - 2]),
        )?;
        Some(base + (0..n - 2).map(|m| self.trajectory.log_z(m, q.step(m))).sum::<f64>())
    }

    /// Max pointwise violation of `P_f = e^{R2} P_b` for the last-two-times
    /// marginal. Outcomes with both sides below `1e-12` are skipped.
    pub fn marginal_ft_failure_scan(&self) -> f64 {
        let (fwd, bwd) = self.quasi_distributions();
        self.r2_violation(&fwd, &bwd)
    }

    fn r2_violation(&self, fwd: &OutcomeDistribution, bwd: &OutcomeDistribution) -> f64 {
        let keep = first_marginal_positions(self.n());
        let (mf, mb) = (fwd.marginalize(&keep), bwd.marginalize(&keep));
        let mut worst: f64 = 0.0;
        for (key, wf) in mf.iter() {
            let Some(r) = self.ep_marginal_last_two(key) else { continue };
            if let Some(v) = relative_violation(*wf, mb.get(key) * r.exp(), 1e-12) {
                worst = worst.max(v);
            }
        }
        worst
    }

    /// Runs every check on one dilation.
    pub fn report(&self) -> Result<NonMarkovReport> {
        let n = self.n();
        let (fwd, bwd) = self.quasi_distributions();
        let mut rep = NonMarkovReport {
            forward_total: fwd.total(),
            backward_total: bwd.total(),
            ..Default::default()
        };
        let xs: Vec<usize> = (0..n).collect();
        let fx = fwd.marginalize(&xs);
        let bx = bwd.marginalize(&xs);
        for x in Lattice::uniform(self.d_s, n) {
            let with = self.forward_with_dephasing(&x)?;
            let without = self.forward_joint(&x)?;
            rep.dephasing_deviation = rep.dephasing_deviation.max((with - without).abs());
            rep.forward_marginal_deviation = rep.forward_marginal_deviation.max((fx.get(&x) - with).norm());
        }
        rep.backward_marginal_imag = bx.max_imag();

        for (key, wf) in fwd.iter() {
            let wb = bwd.get(key);
            if wf.norm() <= 1e-13 || wb.norm() <= 1e-13 {
                continue;
            }
            if let Some(r) = self.ep_nonmarkov_full(&QuasiOutcome::from_key(key, n)) {
                if let Some(v) = relative_violation(*wf, wb * r.exp(), 0.0) {
                    rep.pointwise_violation = rep.pointwise_violation.max(v);
                }
            }
        }

        rep.avg_r = self.average(&fwd, |q| self.ep_nonmarkov_full(q).map(|r| C64::new(r, 0.0)));
        rep.avg_r_formula = self.avg_ep_formula()?;
        rep.avg_r1_prime = self.average(&fwd, |q| self.ep_r1_prime(q).map(|r| C64::new(r, 0.0)));

        if n >= 3 {
            let keep = last_marginal_positions(n);
            let (mf, mb) = (fwd.marginalize(&keep), bwd.marginalize(&keep));
            let mut avg = C64::new(0.0, 0.0);
            for (key, wf) in mf.iter() {
                let wb = mb.get(key);
                match self.ep_marginal_history(key) {
                    Some(r1) => {
                        avg += wf * r1;
                        if let Some(v) = relative_violation(*wf, wb * r1.exp(), 1e-12) {
                            rep.history_r1_violation = rep.history_r1_violation.max(v);
                        }
                    }
                    None => {
                        rep.undefined_history_weight = rep.undefined_history_weight.max(wf.norm()).max(wb.norm());
                    }
                }
            }
            rep.avg_r1_history = avg;
            rep.marginal_r2_violation = self.r2_violation(&fwd, &bwd);
            rep.tpc_defect = self.tpc_defect(n - 2);
        }
        rep.rate_history = (rep.avg_r - rep.avg_r1_history).re;
        rep.rate_prime = (rep.avg_r - rep.avg_r1_prime).re;
        Ok(rep)
    }

    /// Markov process with the same statistics when the dilation creates no
    /// system–environment correlations (product unitaries): step `m` becomes
    /// `X ↦ D(Tr_E V_m (X ⊗ ε_m) V_m†)`, with `ε_m` the environment marginal of
    /// the reference trajectory and `D` the dephasing at measured times.
    /// Reference pairs and bases are taken from the γ trajectory.
    pub fn measured_markov_reduction(&self) -> Result<MarkovProcess> {
        let n = self.n();
        let (ds, de) = (self.d_s, self.d_e);
        let mut channels = Vec::with_capacity(n - 1);
        let mut s = self.gamma0.matrix().kron(self.rho_env.matrix());
        for m in 0..n - 1 {
            if m >= 1 {
                s = self.dephase_system(&self.bases[m], &s);
            }
            let env = partial_trace(&s, &[ds, de], 1)?;
            let v = &self.unitaries[m];
            let mut matrix = ComplexMatrix::zeros(ds * ds, ds * ds);
            for i in 0..ds {
                for j in 0..ds {
                    let mut unit = ComplexMatrix::zeros(ds, ds);
                    unit[(i, j)] = C64::new(1.0, 0.0);
                    let mut out = self.reduce_to_system(&v.conjugate(&unit.kron(&env)));
                    if self.output_measured(m) {
                        out = self.bases[m + 1].dephase(&out);
                    }
                    for k in 0..ds {
                        for l in 0..ds {
                            matrix[(k * ds + l, i * ds + j)] = out[(k, l)];
                        }
                    }
                }
            }
            channels.push(Superoperator::from_matrix(ds, ds, matrix)?);
            s = v.conjugate(&s);
        }
        let tr = &self.trajectory;
        let refs = (0..n - 1)
            .map(|m| {
                ReferencePair::with_bases(
                    tr.gamma_in[m].clone(),
                    tr.gamma_out[m].clone(),
                    tr.in_bases[m].clone(),
                    tr.out_bases[m].clone(),
                )
            })
            .collect();
        MarkovProcess::with_references(self.rho0.clone(), channels, self.bases.clone(), refs)?
            .with_backward_initial(self.rho_tilde0.clone())
    }

    /// Two-time process with the same total unitary and no intermediate
    /// measurement.
    pub fn two_time_variant(&self) -> Result<DilatedProcess> {
        let n = self.n();
        let mut total = ComplexMatrix::identity(self.d_s * self.d_e);
        for v in &self.unitaries {
            total = v.matmul(&total);
        }
        DilatedProcess::new(
            self.rho0.clone(),
            self.rho_env.clone(),
            vec![total],
            vec![self.bases[0].clone(), self.bases[n - 1].clone()],
            self.gamma0.clone(),
        )
    }

    /// Process whose environment is refreshed before every step: step `m`
    /// couples the system to its own fresh copy of `ρ_E`.
    pub fn collision_variant(&self) -> Result<DilatedProcess> {
        let steps = self.n() - 1;
        let (ds, de) = (self.d_s, self.d_e);
        let big_e = de.pow(steps as u32);
        let dim = ds * big_e;
        let digit = |e: usize, m: usize| (e / de.pow((steps - 1 - m) as u32)) % de;
        let unitaries = self
            .unitaries
            .iter()
            .enumerate()
            .map(|(m, v)| {
                ComplexMatrix::from_fn(dim, dim, |r, c| {
                    let (s, e) = (r / big_e, r % big_e);
                    let (s2, e2) = (c / big_e, c % big_e);
                    let others_match = (0..steps).all(|p| p == m || digit(e, p) == digit(e2, p));
                    if !others_match {
                        return C64::new(0.0, 0.0);
                    }
                    v[(s * de + digit(e, m), s2 * de + digit(e2, m))]
                })
            })
            .collect();
        let mut env = self.rho_env.matrix().clone();
        for _ in 1..steps {
            env = env.kron(self.rho_env.matrix());
        }
        DilatedProcess::new(
            self.rho0.clone(),
            DensityMatrix::new(env.hermitian_part())?,
            unitaries,
            self.bases.clone(),
            self.gamma0.clone(),
        )
    }
}

fn dot(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{haar_unitary, random_density, random_diagonal_state};
    use crate::closed_ft::ClosedProcess;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trivial_env() -> DensityMatrix {
        DensityMatrix::maximally_mixed(1)
    }

    #[test]
    fn trivial_environment_is_closed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho0 = random_density(2, &mut rng);
        let us: Vec<ComplexMatrix> = (0..2).map(|_| haar_unitary(2, &mut rng)).collect();
        let bases: Vec<MeasurementBasis> =
            (0..3).map(|_| MeasurementBasis::new(haar_unitary(2, &mut rng)).unwrap()).collect();
        let dil = DilatedProcess::new(rho0.clone(), trivial_env(), us.clone(), bases.clone(), DensityMatrix::maximally_mixed(2))
            .unwrap();
        let closed = ClosedProcess::new(rho0, us, bases).unwrap();
        for x in Lattice::uniform(2, 3) {
            let a = dil.forward_with_dephasing(&x).unwrap();
            assert!((a - closed.forward_joint(&x).unwrap()).abs() < 1e-14);
            assert!((a - dil.forward_joint(&x).unwrap()).abs() < 1e-14);
        }
        // σ is the scalar 1 on diagonal histories
        let c = dil.conditional_env_states(&[(1, 1, 0, 0)]);
        if let Some(s) = c.sigma {
            assert!((s[(0, 0)] - 1.0).norm() < 1e-14);
        }
        // γ0 = I/d under unitary steps stays I/d
        for g in &dil.gamma_trajectory().gamma_out {
            assert!((g.matrix() - &ComplexMatrix::identity(2).scale_real(0.5)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho0 = random_density(2, &mut rng);
        let us: Vec<ComplexMatrix> = (0..3).map(|_| haar_unitary(4, &mut rng)).collect();
        let bases: Vec<MeasurementBasis> =
            (0..4).map(|_| MeasurementBasis::new(haar_unitary(2, &mut rng)).unwrap()).collect();
        let dil = DilatedProcess::new(rho0, random_density(2, &mut rng), us, bases, random_density(2, &mut rng)).unwrap();
        let tr = dil.gamma_trajectory();
        assert_eq!(tr.gamma_in[0].matrix(), dil.gamma0().matrix());
        for m in 1..3 {
            assert_eq!(tr.gamma_in[m].matrix(), tr.gamma_out[m - 1].matrix());
        }
        for m in 0..2 {
            let g = tr.gamma_out[m].matrix();
            let u = dil.bases()[m + 1].kets();
            assert!(u.adjoint().matmul(g).matmul(u).off_diagonal_norm() < 1e-12);
        }
    }

    #[test]
    fn off_diagonal_history_is_not_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b0 = MeasurementBasis::new(haar_unitary(2, &mut rng)).unwrap();
        let rho0 = random_diagonal_state(&b0, &mut rng);
        let us: Vec<ComplexMatrix> = (0..2).map(|_| haar_unitary(4, &mut rng)).collect();
        let bases = vec![b0, MeasurementBasis::new(haar_unitary(2, &mut rng)).unwrap(), MeasurementBasis::computational(2)];
        let dil = DilatedProcess::new(rho0, random_density(2, &mut rng), us, bases, random_density(2, &mut rng)).unwrap();
        let c = dil.conditional_env_states(&[(0, 1, 0, 0)]);
        assert!(c.raw.hermiticity_defect() > 1e-6);
        assert!(dil.tpc_defect(1) < 1e-11);
        let diag = dil.conditional_env_states(&[(1, 1, 0, 0)]);
        assert!((diag.sigma.unwrap().trace() - 1.0).norm() < 1e-12);
    }
}
