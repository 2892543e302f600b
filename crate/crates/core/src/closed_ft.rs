//! Closed (unitary) multitime processes with rank-one projective
//! measurements at every time.
//!
//! Times are 0-based in code: measurement `t` uses `bases[t]`, and step `m`
//! applies `unitaries[m]` between measurements `m` and `m + 1`. A path is the
//! tuple `(x_0, …, x_{n−1})` read in forward order; the backward process
//! consumes the same tuple from the end.

use crate::channels::MeasurementBasis;
use crate::linalg::{ComplexMatrix, DensityMatrix, C64};
use crate::opstate::Superoperator;
use crate::outcome::{relative_violation, Lattice, OutcomeDistribution};
use crate::{Error, Result};

/// Outcome tuple `(x_0, …, x_{n−1})`.
pub type OutcomePath = Vec<usize>;

/// Weights below this are treated as zero in pointwise checks.
pub const ZERO_WEIGHT: f64 = 1e-14;
/// Atoms of an EP distribution closer than this are merged.
pub const ATOM_TOL: f64 = 1e-9;

const UNITARITY_TOL: f64 = 1e-11;

/// Which entropy production to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpKind {
    /// Over all `n` times.
    Full,
    /// Over the first `n − 1` times (last measurement summed out).
    LastMarginal,
    /// Over the last two times (first `n − 2` measurements summed out).
    FirstMarginal,
}

impl EpKind {
    /// Path positions retained by the marginal.
    pub fn kept_positions(self, n: usize) -> Vec<usize> {
        match self {
            EpKind::Full => (0..n).collect(),
            EpKind::LastMarginal => (0..n - 1).collect(),
            EpKind::FirstMarginal => vec![n - 2, n - 1],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpDirection {
    Forward,
    Backward,
}

/// Histogram of entropy-production values.
#[derive(Clone, Debug)]
pub struct EPDistribution {
    pub direction: EpDirection,
    /// `(R, weight)` sorted by `R`.
    pub atoms: Vec<(f64, f64)>,
    /// Largest weight carried by outcomes whose EP is undefined.
    pub excluded_weight: f64,
}

impl EPDistribution {
    /// Groups `(R, w)` records, merging values within [`ATOM_TOL`] of a
    /// cluster's first member.
    pub fn from_records(direction: EpDirection, mut records: Vec<(f64, f64)>, excluded_weight: f64) -> Self {
        records.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        let mut anchor = f64::NAN;
        for (r, w) in records {
            match atoms.last_mut() {
                Some(last) if (r - anchor).abs() <= ATOM_TOL => last.1 += w,
                _ => {
                    anchor = r;
                    atoms.push((r, w));
                }
            }
        }
        Self {
            direction,
            atoms,
            excluded_weight,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// Weight of the atom at `r`, or 0.
    pub fn weight_at(&self, r: f64) -> f64 {
        self.atoms
            .iter()
            .find(|a| (a.0 - r).abs() <= ATOM_TOL)
            .map_or(0.0, |a| a.1)
    }
}

/// Result of a pointwise detailed-FT check.
#[derive(Clone, Debug, Default)]
pub struct FtReport {
    /// Max of `|P_f − e^R P_b| / max(P_f, e^R P_b)` over checked outcomes.
    pub max_violation: f64,
    /// Number of outcomes compared.
    pub checked: usize,
    /// Outcomes where exactly one of the two weights is nonzero.
    pub support_mismatches: Vec<Vec<usize>>,
    /// Same relation at the level of EP histograms, `p(R) = e^R p^tr(−R)`.
    pub distribution_violation: f64,
}

/// Averages entering the integral FT and the EP rate.
#[derive(Clone, Copy, Debug)]
pub struct IntegralReport {
    /// `⟨e^{−R}⟩`.
    pub mean_exp_minus_r: f64,
    /// `⟨e^{−(R−R1)}⟩`.
    pub mean_exp_minus_r_minus_r1: f64,
    pub avg_r: f64,
    pub avg_r1: f64,
    pub avg_r2: f64,
    /// `⟨R⟩ − ⟨R1⟩`.
    pub rate: f64,
}

/// Closed `n`-time process: initial state, `n − 1` unitaries, `n` bases.
#[derive(Clone, Debug)]
pub struct ClosedProcess {
    rho0: DensityMatrix,
    unitaries: Vec<ComplexMatrix>,
    bases: Vec<MeasurementBasis>,
    steps: Vec<Superoperator>,
    inverse_steps: Vec<Superoperator>,
    rho_tilde0: DensityMatrix,
}

impl ClosedProcess {
    pub fn new(rho0: DensityMatrix, unitaries: Vec<ComplexMatrix>, bases: Vec<MeasurementBasis>) -> Result<Self> {
        let n = bases.len();
        if n < 2 {
            return Err(Error::InvalidProcess(format!("need at least 2 times, got {n}")));
        }
        if unitaries.len() != n - 1 {
            return Err(Error::InvalidProcess(format!(
                "{} unitaries for {n} times",
                unitaries.len()
            )));
        }
        let d = rho0.dim();
        for b in &bases {
            if b.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: b.dim() });
            }
        }
        for u in &unitaries {
            if u.rows() != d || u.cols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: u.rows() });
            }
            let defect = (&u.adjoint().matmul(u) - &ComplexMatrix::identity(d)).max_abs();
            if defect > UNITARITY_TOL {
                return Err(Error::NotUnitary(defect));
            }
        }
        let steps: Vec<Superoperator> = unitaries.iter().map(Superoperator::unitary).collect();
        let inverse_steps: Vec<Superoperator> = steps.iter().map(Superoperator::adjoint).collect();
        let mut evolved = rho0.matrix().clone();
        for u in &unitaries {
            evolved = u.conjugate(&evolved);
        }
        let rho_tilde0 = DensityMatrix::new(evolved.hermitian_part())?;
        Ok(Self {
            rho0,
            unitaries,
            bases,
            steps,
            inverse_steps,
            rho_tilde0,
        })
    }

    pub fn n(&self) -> usize {
        self.bases.len()
    }

    pub fn dim(&self) -> usize {
        self.rho0.dim()
    }

    pub fn rho0(&self) -> &DensityMatrix {
        &self.rho0
    }

    pub fn unitaries(&self) -> &[ComplexMatrix] {
        &self.unitaries
    }

    pub fn bases(&self) -> &[MeasurementBasis] {
        &self.bases
    }

    /// All `d^n` paths in lexicographic order.
    pub fn paths(&self) -> Lattice {
        Lattice::uniform(self.dim(), self.n())
    }

    fn check_path(&self, x: &[usize], len: usize) -> Result<()> {
        if x.len() != len {
            return Err(Error::DimensionMismatch { expected: len, found: x.len() });
        }
        if let Some(&bad) = x.iter().find(|&&v| v >= self.dim()) {
            return Err(Error::InvalidIndex { index: bad, bound: self.dim() });
        }
        Ok(())
    }

    /// `(Π^{x_{n−1}}|U_{n−2}|Π^{x_{n−2}})···(Π^{x_0}|ρ_0)`.
    pub fn forward_joint(&self, x: &[usize]) -> Result<f64> {
        self.check_path(x, self.n())?;
        let mut p = C64::new(self.bases[0].population(self.rho0.matrix(), x[0]), 0.0);
        for (m, step) in self.steps.iter().enumerate() {
            let input = self.bases[m].projector(x[m]);
            let output = self.bases[m + 1].projector(x[m + 1]);
            p *= step.sandwich(&output, &input);
        }
        real_probability(p)
    }

    /// Final state of the unmeasured forward evolution, `U ρ_0 U†`.
    pub fn backward_initial(&self) -> &DensityMatrix {
        &self.rho_tilde0
    }

    /// `(Π^{x_0}|U_0^{−1}|Π^{x_1})···(Π^{x_{n−1}}|ρ̃_0)`, the backward process
    /// reading the path from its end.
    pub fn backward_joint(&self, x: &[usize]) -> Result<f64> {
        self.check_path(x, self.n())?;
        let n = self.n();
        let mut p = C64::new(self.bases[n - 1].population(self.rho_tilde0.matrix(), x[n - 1]), 0.0);
        for (m, step) in self.inverse_steps.iter().enumerate().rev() {
            let input = self.bases[m + 1].projector(x[m + 1]);
            let output = self.bases[m].projector(x[m]);
            p *= step.sandwich(&output, &input);
        }
        real_probability(p)
    }

    /// `ρ̃_1 = U_{n−2}^{−1} M_{n−1}(ρ̃_0) U_{n−2}`.
    pub fn rho_tilde1(&self) -> ComplexMatrix {
        let n = self.n();
        let dephased = self.bases[n - 1].dephase(self.rho_tilde0.matrix());
        self.inverse_steps[n - 2].apply(&dephased)
    }

    /// `ρ_{n−2}`: forward evolution to the second-to-last time with every
    /// earlier measurement applied as a dephasing.
    pub fn rho_before_last(&self) -> ComplexMatrix {
        let mut s = self.rho0.matrix().clone();
        for m in 0..self.n() - 2 {
            s = self.steps[m].apply(&self.bases[m].dephase(&s));
        }
        s
    }

    /// `R = ln[(Π^{x_0}|ρ_0) / (Π^{x_{n−1}}|ρ̃_0)]`; `None` when either
    /// population vanishes.
    pub fn ep_full(&self, x: &[usize]) -> Option<f64> {
        let n = self.n();
        let a = self.bases[0].population(self.rho0.matrix(), x[0]);
        let b = self.bases[n - 1].population(self.rho_tilde0.matrix(), x[n - 1]);
        log_ratio(a, b)
    }

    /// `R1 = ln[(Π^{x_0}|ρ_0) / (Π^{x_{n−2}}|ρ̃_1)]` for a prefix of length
    /// `n − 1`.
    pub fn ep_marginal_last(&self, prefix: &[usize]) -> Option<f64> {
        let n = self.n();
        let a = self.bases[0].population(self.rho0.matrix(), prefix[0]);
        let b = self.bases[n - 2].population(&self.rho_tilde1(), prefix[n - 2]);
        log_ratio(a, b)
    }

    /// `R2 = ln[(Π^{x_{n−2}}|ρ_{n−2}) / (Π^{x_{n−1}}|ρ̃_0)]`.
    pub fn ep_marginal_first(&self, x_second_last: usize, x_last: usize) -> Option<f64> {
        let n = self.n();
        let a = self.bases[n - 2].population(&self.rho_before_last(), x_second_last);
        let b = self.bases[n - 1].population(self.rho_tilde0.matrix(), x_last);
        log_ratio(a, b)
    }

    /// EP of `kind` evaluated on a key laid out as
    /// [`EpKind::kept_positions`].
    pub fn ep_on_key(&self, kind: EpKind, key: &[usize]) -> Option<f64> {
        match kind {
            EpKind::Full => self.ep_full(key),
            EpKind::LastMarginal => self.ep_marginal_last(key),
            EpKind::FirstMarginal => self.ep_marginal_first(key[0], key[1]),
        }
    }

    /// EP of `kind` evaluated on a full path.
    pub fn ep(&self, kind: EpKind, x: &[usize]) -> Option<f64> {
        let key: Vec<usize> = kind.kept_positions(self.n()).iter().map(|&p| x[p]).collect();
        self.ep_on_key(kind, &key)
    }

    pub fn forward_distribution(&self) -> Result<OutcomeDistribution> {
        self.paths()
            .map(|x| Ok((x.clone(), C64::new(self.forward_joint(&x)?, 0.0))))
            .collect()
    }

    pub fn backward_distribution(&self) -> Result<OutcomeDistribution> {
        self.paths()
            .map(|x| Ok((x.clone(), C64::new(self.backward_joint(&x)?, 0.0))))
            .collect()
    }

    /// Forward and backward joint distributions marginalized for `kind`.
    pub fn marginal_pair(&self, kind: EpKind) -> Result<(OutcomeDistribution, OutcomeDistribution)> {
        let keep = kind.kept_positions(self.n());
        Ok((
            self.forward_distribution()?.marginalize(&keep),
            self.backward_distribution()?.marginalize(&keep),
        ))
    }

    /// Exact EP histogram. Backward records carry `−R`, the EP of the
    /// reversed path.
    pub fn ep_distribution(&self, kind: EpKind, direction: EpDirection) -> Result<EPDistribution> {
        let (fwd, bwd) = self.marginal_pair(kind)?;
        let source = match direction {
            EpDirection::Forward => &fwd,
            EpDirection::Backward => &bwd,
        };
        let sign = match direction {
            EpDirection::Forward => 1.0,
            EpDirection::Backward => -1.0,
        };
        let mut records = Vec::new();
        let mut excluded: f64 = 0.0;
        for (key, w) in source.iter() {
            match self.ep_on_key(kind, key) {
                Some(r) => records.push((sign * r, w.re)),
                None => excluded = excluded.max(w.norm()),
            }
        }
        Ok(EPDistribution::from_records(direction, records, excluded))
    }

    /// Pointwise `P_f = e^R P_b` on every marginal outcome, plus the
    /// histogram-level relation.
    pub fn detailed_ft_check(&self, kind: EpKind) -> Result<FtReport> {
        let (fwd, bwd) = self.marginal_pair(kind)?;
        let mut report = FtReport::default();
        for (key, wf) in fwd.iter() {
            let wb = bwd.get(key);
            let (f_zero, b_zero) = (wf.norm() <= ZERO_WEIGHT, wb.norm() <= ZERO_WEIGHT);
            if f_zero != b_zero {
                report.support_mismatches.push(key.clone());
                continue;
            }
            if b_zero {
                continue;
            }
            let Some(r) = self.ep_on_key(kind, key) else {
                report.support_mismatches.push(key.clone());
                continue;
            };
            let predicted = wb * r.exp();
            if let Some(v) = relative_violation(*wf, predicted, 0.0) {
                report.max_violation = report.max_violation.max(v);
                report.checked += 1;
            }
        }
        let pf = self.ep_distribution(kind, EpDirection::Forward)?;
        let pb = self.ep_distribution(kind, EpDirection::Backward)?;
        report.distribution_violation = histogram_ft_violation(&pf, &pb);
        Ok(report)
    }

    /// For every interior time `t`, compares `Σ_{x_t} P_f` with the joint of
    /// the process that skips measurement `t` and merges its neighbouring
    /// unitaries. Returns the largest absolute deviation.
    pub fn kolmogorov_check(&self) -> Result<f64> {
        let n = self.n();
        if n < 3 {
            return Err(Error::InvalidProcess("Kolmogorov check needs n >= 3".into()));
        }
        let fwd = self.forward_distribution()?;
        let mut worst: f64 = 0.0;
        for t in 1..n - 1 {
            let keep: Vec<usize> = (0..n).filter(|&p| p != t).collect();
            let summed = fwd.marginalize(&keep);
            let mut unitaries = self.unitaries[..t - 1].to_vec();
            unitaries.push(self.unitaries[t].matmul(&self.unitaries[t - 1]));
            unitaries.extend_from_slice(&self.unitaries[t + 1..]);
            let bases: Vec<MeasurementBasis> =
                keep.iter().map(|&p| self.bases[p].clone()).collect();
            let reduced = ClosedProcess::new(self.rho0.clone(), unitaries, bases)?;
            worst = worst.max(summed.max_deviation(&reduced.forward_distribution()?));
        }
        Ok(worst)
    }

    /// `⟨e^{−R}⟩`, `⟨e^{−(R−R1)}⟩`, the averages of `R`, `R1`, `R2`, and the
    /// rate `⟨R⟩ − ⟨R1⟩`, all under the forward joint distribution.
    pub fn integral_ft_and_rate(&self) -> Result<IntegralReport> {
        let mut acc = IntegralReport {
            mean_exp_minus_r: 0.0,
            mean_exp_minus_r_minus_r1: 0.0,
            avg_r: 0.0,
            avg_r1: 0.0,
            avg_r2: 0.0,
            rate: 0.0,
        };
        for x in self.paths() {
            let p = self.forward_joint(&x)?;
            if p <= 0.0 {
                continue;
            }
            let r = self.ep(EpKind::Full, &x).ok_or_else(undefined)?;
            let r1 = self.ep(EpKind::LastMarginal, &x).ok_or_else(undefined)?;
            let r2 = self.ep(EpKind::FirstMarginal, &x).ok_or_else(undefined)?;
            acc.mean_exp_minus_r += p * (-r).exp();
            acc.mean_exp_minus_r_minus_r1 += p * (r1 - r).exp();
            acc.avg_r += p * r;
            acc.avg_r1 += p * r1;
            acc.avg_r2 += p * r2;
        }
        acc.rate = acc.avg_r - acc.avg_r1;
        Ok(acc)
    }
}

fn undefined() -> Error {
    Error::SupportViolation("EP undefined on an outcome with positive forward weight".into())
}

/// Strips an imaginary residue of at most `1e-10`; larger residues signal an
/// internal inconsistency.
pub(crate) fn real_probability(p: C64) -> Result<f64> {
    if p.im.abs() > 1e-10 {
        return Err(Error::ImaginaryResidue(p.im.abs()));
    }
    Ok(p.re)
}

pub(crate) fn log_ratio(a: f64, b: f64) -> Option<f64> {
    if a > 0.0 && b > 0.0 {
        Some((a / b).ln())
    } else {
        None
    }
}

/// Max relative violation of `p(R) = e^R p^tr(−R)` over atoms. Backward
/// histograms store `−R`, so the partner of forward atom `r` sits at `r`.
pub fn histogram_ft_violation(forward: &EPDistribution, backward: &EPDistribution) -> f64 {
    let mut worst: f64 = 0.0;
    for &(r, w) in &forward.atoms {
        let wb = backward.weight_at(-r);
        if let Some(v) = relative_violation(C64::new(w, 0.0), C64::new(wb * r.exp(), 0.0), ZERO_WEIGHT) {
            worst = worst.max(v);
        }
    }
    for &(rb, wb) in &backward.atoms {
        if forward.weight_at(-rb) == 0.0 && wb.abs() > ZERO_WEIGHT {
            worst = worst.max(1.0);
        }
    }
    worst
}
