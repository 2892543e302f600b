//! Markovian multitime processes: independent CPTP steps, quasi-measurements
//! in reference-state eigenbases, Petz backward processes.
//!
//! A quasi outcome adds, for every step `m`, an input pair `(i_m, j_m)` in the
//! eigenbasis of the reference state `γ_m` and an output pair `(k′_m, l′_m)` in
//! the eigenbasis of `N_m(γ_m)`. Flat keys are laid out as
//! `[x_0, …, x_{n−1}, i_0, j_0, k′_0, l′_0, i_1, …]`.

use crate::channels::{petz_recovery, MeasurementBasis, ReferencePair};
use crate::closed_ft::{log_ratio, real_probability, ClosedProcess, ZERO_WEIGHT};
use crate::linalg::{ComplexMatrix, DensityMatrix, C64};
use crate::opstate::{choi_of, Superoperator, CP_TOL, TP_TOL};
use crate::outcome::{relative_violation, Lattice, OutcomeDistribution};
use crate::{Error, Result};

/// Projective outcomes plus per-step quasi indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuasiOutcome {
    pub x: Vec<usize>,
    pub i: Vec<usize>,
    pub j: Vec<usize>,
    pub kp: Vec<usize>,
    pub lp: Vec<usize>,
}

impl QuasiOutcome {
    /// Splits a flat key of a process with `n` times.
    pub fn from_key(key: &[usize], n: usize) -> Self {
        let steps = &key[n..];
        let pick = |o: usize| (0..n - 1).map(|m| steps[4 * m + o]).collect();
        Self {
            x: key[..n].to_vec(),
            i: pick(0),
            j: pick(1),
            kp: pick(2),
            lp: pick(3),
        }
    }

    pub fn to_key(&self) -> Vec<usize> {
        let mut key = self.x.clone();
        for m in 0..self.i.len() {
            key.extend([self.i[m], self.j[m], self.kp[m], self.lp[m]]);
        }
        key
    }

    pub fn step(&self, m: usize) -> (usize, usize, usize, usize) {
        (self.i[m], self.j[m], self.kp[m], self.lp[m])
    }
}

/// Flat-key positions kept by the `R1` marginal (last time and last step
/// summed out).
pub fn last_marginal_positions(n: usize) -> Vec<usize> {
    (0..n - 1).chain((0..4 * (n - 2)).map(|p| n + p)).collect()
}

/// Flat-key positions kept by the `R2` marginal: the last two times and the
/// last step.
pub fn first_marginal_positions(n: usize) -> Vec<usize> {
    let last_step = n + 4 * (n - 2);
    vec![n - 2, n - 1, last_step, last_step + 1, last_step + 2, last_step + 3]
}

/// Matrix elements of one step in its quasi bases.
#[derive(Clone, Debug)]
pub(crate) struct StepTables {
    d: usize,
    /// `(Π_ij|Π^x)`, indexed `[x][i][j]`; `x` in the step's input basis.
    into_ij: Vec<C64>,
    /// `(Π^x|Π_kl)`, indexed `[x][k][l]`; `x` in the step's output basis.
    from_kl: Vec<C64>,
    /// `(Π_kl|N|Π_ij)`, indexed `[k][l][i][j]`.
    channel: Vec<C64>,
    /// `(Π_ij|R|Π_kl)`, indexed `[i][j][k][l]`.
    recovery: Vec<C64>,
}

impl StepTables {
    pub(crate) fn new(
        input_basis: &MeasurementBasis,
        output_basis: &MeasurementBasis,
        pair: &ReferencePair,
        channel: &Superoperator,
        recovery: &Superoperator,
    ) -> Self {
        let d = input_basis.dim();
        let iv: Vec<Vec<C64>> = (0..d).map(|k| pair.i_basis.vector(k)).collect();
        let kv: Vec<Vec<C64>> = (0..d).map(|k| pair.k_basis.vector(k)).collect();
        let dot = |u: &[C64], v: &[C64]| -> C64 { u.iter().zip(v).map(|(a, b)| a.conj() * b).sum() };
        let mut into_ij = Vec::with_capacity(d * d * d);
        let mut from_kl = Vec::with_capacity(d * d * d);
        for x in 0..d {
            let xi = input_basis.ket(x);
            let xo = output_basis.ket(x);
            for a in 0..d {
                for b in 0..d {
                    // ⟨a|x⟩⟨x|b⟩ and ⟨x|a⟩⟨b|x⟩
                    into_ij.push(dot(&iv[a], &xi) * dot(&xi, &iv[b]));
                    from_kl.push(dot(&xo, &kv[a]) * dot(&kv[b], &xo));
                }
            }
        }
        let units_i: Vec<ComplexMatrix> = (0..d * d)
            .map(|p| ComplexMatrix::ket_bra(&iv[p / d], &iv[p % d]))
            .collect();
        let units_k: Vec<ComplexMatrix> = (0..d * d)
            .map(|p| ComplexMatrix::ket_bra(&kv[p / d], &kv[p % d]))
            .collect();
        let mut channel_t = Vec::with_capacity(d.pow(4));
        for kl in &units_k {
            for ij in &units_i {
                channel_t.push(channel.sandwich(kl, ij));
            }
        }
        let mut recovery_t = Vec::with_capacity(d.pow(4));
        for ij in &units_i {
            for kl in &units_k {
                recovery_t.push(recovery.sandwich(ij, kl));
            }
        }
        Self {
            d,
            into_ij,
            from_kl,
            channel: channel_t,
            recovery: recovery_t,
        }
    }

    fn idx3(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.d + b) * self.d + c
    }

    fn idx4(&self, a: usize, b: usize, c: usize, e: usize) -> usize {
        ((a * self.d + b) * self.d + c) * self.d + e
    }

    /// `(Π_ij|Π^{x_in}) (Π_kl|N|Π_ij) (Π^{x_out}|Π_kl)`.
    pub(crate) fn forward_factor(&self, x_in: usize, x_out: usize, (i, j, k, l): (usize, usize, usize, usize)) -> C64 {
        self.into_ij[self.idx3(x_in, i, j)] * self.channel[self.idx4(k, l, i, j)] * self.from_kl[self.idx3(x_out, k, l)]
    }

    /// `(Π_kl|Π^{x_out}) (Π_ij|R|Π_kl) (Π^{x_in}|Π_ij)`.
    pub(crate) fn backward_factor(&self, x_in: usize, x_out: usize, (i, j, k, l): (usize, usize, usize, usize)) -> C64 {
        self.from_kl[self.idx3(x_out, k, l)].conj()
            * self.recovery[self.idx4(i, j, k, l)]
            * self.into_ij[self.idx3(x_in, i, j)].conj()
    }
}

/// Summary of the Markovian FT suite.
#[derive(Clone, Debug, Default)]
pub struct MarkovFtReport {
    pub forward_total: C64,
    pub backward_total: C64,
    /// Largest deviation of the quasi-marginal from the projective joint.
    pub forward_marginal_deviation: f64,
    pub backward_marginal_deviation: f64,
    /// Largest imaginary part of a projective quasi-marginal.
    pub marginal_max_imag: f64,
    /// Pointwise quasi detailed FT, full process.
    pub pointwise_violation: f64,
    /// Pointwise FT for the `R1` and `R2` marginals.
    pub r1_violation: f64,
    pub r2_violation: f64,
    pub support_mismatches: usize,
    /// `⟨e^{−R}⟩` and `⟨e^{−(R−R1)}⟩` under the forward quasidistribution.
    pub integral_full: C64,
    pub integral_r1: C64,
    pub avg_r: C64,
    pub avg_r1: C64,
    pub avg_r2: C64,
    /// `⟨R′2⟩` under its own two-time forward process.
    pub avg_r2_prime: C64,
    /// `Re(⟨R⟩ − ⟨R1⟩)`.
    pub rate: f64,
    /// `Re(⟨R⟩ − ⟨R1⟩ − ⟨R′2⟩)`.
    pub rate_gap: f64,
    /// Largest of `|R′1 + R2 − R|` and `|R1 + R′2 − R|`.
    pub chain_deviation: f64,
}

/// `n`-time process of independent CPTP steps with reference states.
#[derive(Clone, Debug)]
pub struct MarkovProcess {
    rho0: DensityMatrix,
    channels: Vec<Superoperator>,
    bases: Vec<MeasurementBasis>,
    refs: Vec<ReferencePair>,
    recoveries: Vec<Superoperator>,
    rho_tilde0: DensityMatrix,
    tables: Vec<StepTables>,
}

impl MarkovProcess {
    /// Builds reference pairs from `gammas` (regularized if singular) with
    /// canonical eigenbases; `ρ̃_0` defaults to the unmeasured final state.
    pub fn new(
        rho0: DensityMatrix,
        channels: Vec<Superoperator>,
        bases: Vec<MeasurementBasis>,
        gammas: Vec<DensityMatrix>,
    ) -> Result<Self> {
        if gammas.len() != channels.len() {
            return Err(Error::InvalidProcess(format!(
                "{} reference states for {} steps",
                gammas.len(),
                channels.len()
            )));
        }
        validate_channels(&channels, rho0.dim())?;
        let refs = gammas
            .iter()
            .zip(&channels)
            .map(|(g, ch)| ReferencePair::new(g, ch))
            .collect::<Result<Vec<_>>>()?;
        Self::with_references(rho0, channels, bases, refs)
    }

    /// Uses caller-supplied reference pairs (bases included).
    pub fn with_references(
        rho0: DensityMatrix,
        channels: Vec<Superoperator>,
        bases: Vec<MeasurementBasis>,
        refs: Vec<ReferencePair>,
    ) -> Result<Self> {
        let n = bases.len();
        if n < 2 {
            return Err(Error::InvalidProcess(format!("need at least 2 times, got {n}")));
        }
        if channels.len() != n - 1 || refs.len() != n - 1 {
            return Err(Error::InvalidProcess(format!(
                "{} channels and {} reference pairs for {n} times",
                channels.len(),
                refs.len()
            )));
        }
        let d = rho0.dim();
        for b in &bases {
            if b.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: b.dim() });
            }
        }
        validate_channels(&channels, d)?;
        for (pair, ch) in refs.iter().zip(&channels) {
            let image = ch.apply(pair.gamma.matrix());
            let defect = (&image - pair.gamma_out.matrix()).max_abs();
            if defect > 1e-11 {
                return Err(Error::InvalidProcess(format!(
                    "reference output differs from channel image by {defect:.3e}"
                )));
            }
        }
        let recoveries = refs
            .iter()
            .zip(&channels)
            .map(|(pair, ch)| petz_recovery(ch, &pair.gamma))
            .collect::<Result<Vec<_>>>()?;
        let mut evolved = rho0.matrix().clone();
        for ch in &channels {
            evolved = ch.apply(&evolved);
        }
        let rho_tilde0 = DensityMatrix::new(evolved.hermitian_part())?;
        let tables = (0..n - 1)
            .map(|m| StepTables::new(&bases[m], &bases[m + 1], &refs[m], &channels[m], &recoveries[m]))
            .collect();
        Ok(Self {
            rho0,
            channels,
            bases,
            refs,
            recoveries,
            rho_tilde0,
            tables,
        })
    }

    /// Unitary channels of a closed process with the given reference states.
    pub fn from_closed(closed: &ClosedProcess, gammas: Vec<DensityMatrix>) -> Result<Self> {
        let channels = closed.unitaries().iter().map(Superoperator::unitary).collect();
        Self::new(closed.rho0().clone(), channels, closed.bases().to_vec(), gammas)
    }

    /// Replaces the backward initial state.
    pub fn with_backward_initial(mut self, rho_tilde0: DensityMatrix) -> Result<Self> {
        if rho_tilde0.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: rho_tilde0.dim() });
        }
        self.rho_tilde0 = rho_tilde0;
        Ok(self)
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

    pub fn channels(&self) -> &[Superoperator] {
        &self.channels
    }

    pub fn bases(&self) -> &[MeasurementBasis] {
        &self.bases
    }

    pub fn refs(&self) -> &[ReferencePair] {
        &self.refs
    }

    pub fn recoveries(&self) -> &[Superoperator] {
        &self.recoveries
    }

    pub fn backward_initial(&self) -> &DensityMatrix {
        &self.rho_tilde0
    }

    /// Length of a flat quasi key.
    pub fn key_len(&self) -> usize {
        self.n() + 4 * (self.n() - 1)
    }

    pub fn quasi_outcomes(&self) -> Lattice {
        Lattice::uniform(self.dim(), self.key_len())
    }

    fn check_path(&self, x: &[usize]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: x.len() });
        }
        if let Some(&bad) = x.iter().find(|&&v| v >= self.dim()) {
            return Err(Error::InvalidIndex { index: bad, bound: self.dim() });
        }
        Ok(())
    }

    /// `(Π^{x_{n−1}}|N_{n−2}|Π^{x_{n−2}})···(Π^{x_0}|ρ_0)`.
    pub fn forward_joint(&self, x: &[usize]) -> Result<f64> {
        self.check_path(x)?;
        let mut p = C64::new(self.bases[0].population(self.rho0.matrix(), x[0]), 0.0);
        for (m, ch) in self.channels.iter().enumerate() {
            p *= ch.sandwich(&self.bases[m + 1].projector(x[m + 1]), &self.bases[m].projector(x[m]));
        }
        real_probability(p)
    }

    /// Projective joint of the Petz backward process.
    pub fn backward_joint(&self, x: &[usize]) -> Result<f64> {
        self.check_path(x)?;
        let n = self.n();
        let mut p = C64::new(self.bases[n - 1].population(self.rho_tilde0.matrix(), x[n - 1]), 0.0);
        for (m, r) in self.recoveries.iter().enumerate().rev() {
            p *= r.sandwich(&self.bases[m].projector(x[m]), &self.bases[m + 1].projector(x[m + 1]));
        }
        real_probability(p)
    }

    /// Forward quasiprobability of one outcome.
    pub fn quasi_forward(&self, q: &QuasiOutcome) -> C64 {
        let mut w = C64::new(self.bases[0].population(self.rho0.matrix(), q.x[0]), 0.0);
        for (m, t) in self.tables.iter().enumerate() {
            w *= t.forward_factor(q.x[m], q.x[m + 1], q.step(m));
        }
        w
    }

    /// Backward quasiprobability, complex-conjugated so that it pairs with
    /// the forward weight of the same outcome.
    pub fn quasi_backward(&self, q: &QuasiOutcome) -> C64 {
        let n = self.n();
        let mut w = C64::new(self.bases[n - 1].population(self.rho_tilde0.matrix(), q.x[n - 1]), 0.0);
        for (m, t) in self.tables.iter().enumerate() {
            w *= t.backward_factor(q.x[m], q.x[m + 1], q.step(m));
        }
        w.conj()
    }

    /// Both quasidistributions over the full lattice.
    pub fn quasi_distributions(&self) -> (OutcomeDistribution, OutcomeDistribution) {
        let n = self.n();
        let mut fwd = OutcomeDistribution::new();
        let mut bwd = OutcomeDistribution::new();
        for key in self.quasi_outcomes() {
            let q = QuasiOutcome::from_key(&key, n);
            fwd.insert(key.clone(), self.quasi_forward(&q));
            bwd.insert(key, self.quasi_backward(&q));
        }
        (fwd, bwd)
    }

    fn log_z_sum(&self, q: &QuasiOutcome, steps: std::ops::Range<usize>) -> f64 {
        steps
            .map(|m| {
                let (i, j, k, l) = q.step(m);
                self.refs[m].log_z(i, j, k, l)
            })
            .sum()
    }

    /// `ρ̃_1 = R_{n−2}(M_{n−1} ρ̃_0)`.
    pub fn rho_tilde1(&self) -> ComplexMatrix {
        let n = self.n();
        self.recoveries[n - 2].apply(&self.bases[n - 1].dephase(self.rho_tilde0.matrix()))
    }

    /// `ρ_{n−2} = N_{n−3} M … N_0 M_0 ρ_0`.
    pub fn rho_before_last(&self) -> ComplexMatrix {
        let mut s = self.rho0.matrix().clone();
        for m in 0..self.n() - 2 {
            s = self.channels[m].apply(&self.bases[m].dephase(&s));
        }
        s
    }

    fn pop(&self, t: usize, rho: &ComplexMatrix, x: usize) -> f64 {
        self.bases[t].population(rho, x)
    }

    /// `R = ln[(Π^{x_0}|ρ_0)/(Π^{x_{n−1}}|ρ̃_0)] + Σ_m ln(Z^{γ_m^{−1}}_{ij} Z^{N_m(γ_m)}_{k′l′})`.
    pub fn ep_quasi_full(&self, q: &QuasiOutcome) -> Option<f64> {
        let n = self.n();
        let base = log_ratio(
            self.pop(0, self.rho0.matrix(), q.x[0]),
            self.pop(n - 1, self.rho_tilde0.matrix(), q.x[n - 1]),
        )?;
        Some(base + self.log_z_sum(q, 0..n - 1))
    }

    /// `R1`: backward process started from `ρ̃_1`.
    pub fn ep_quasi_r1(&self, q: &QuasiOutcome) -> Option<f64> {
        let n = self.n();
        let base = log_ratio(
            self.pop(0, self.rho0.matrix(), q.x[0]),
            self.pop(n - 2, &self.rho_tilde1(), q.x[n - 2]),
        )?;
        Some(base + self.log_z_sum(q, 0..n - 2))
    }

    /// `R2`: last step, forward process started from `ρ_{n−2}`.
    pub fn ep_quasi_r2(&self, q: &QuasiOutcome) -> Option<f64> {
        let n = self.n();
        let base = log_ratio(
            self.pop(n - 2, &self.rho_before_last(), q.x[n - 2]),
            self.pop(n - 1, self.rho_tilde0.matrix(), q.x[n - 1]),
        )?;
        Some(base + self.log_z_sum(q, n - 2..n - 1))
    }

    /// `R′1`: as `R1` with backward initial state `ρ_{n−2}`.
    pub fn ep_quasi_r1_prime(&self, q: &QuasiOutcome) -> Option<f64> {
        let n = self.n();
        let base = log_ratio(
            self.pop(0, self.rho0.matrix(), q.x[0]),
            self.pop(n - 2, &self.rho_before_last(), q.x[n - 2]),
        )?;
        Some(base + self.log_z_sum(q, 0..n - 2))
    }

    /// `R′2`: as `R2` with forward initial state `ρ̃_1`.
    pub fn ep_quasi_r2_prime(&self, q: &QuasiOutcome) -> Option<f64> {
        let n = self.n();
        let base = log_ratio(
            self.pop(n - 2, &self.rho_tilde1(), q.x[n - 2]),
            self.pop(n - 1, self.rho_tilde0.matrix(), q.x[n - 1]),
        )?;
        Some(base + self.log_z_sum(q, n - 2..n - 1))
    }

    /// Pointwise `W_f = e^R W_b` over paired distributions; outcomes where
    /// both weights are below [`ZERO_WEIGHT`] are skipped and one-sided
    /// support is counted separately.
    fn pointwise(
        &self,
        fwd: &OutcomeDistribution,
        bwd: &OutcomeDistribution,
        ep: impl Fn(&[usize]) -> Option<f64>,
    ) -> (f64, usize) {
        let mut worst: f64 = 0.0;
        let mut mismatches = 0;
        for (key, wf) in fwd.iter() {
            let wb = bwd.get(key);
            if wf.norm() <= ZERO_WEIGHT && wb.norm() <= ZERO_WEIGHT {
                continue;
            }
            match ep(key) {
                Some(r) => {
                    if let Some(v) = relative_violation(*wf, wb * r.exp(), ZERO_WEIGHT) {
                        worst = worst.max(v);
                    }
                }
                None => mismatches += 1,
            }
        }
        (worst, mismatches)
    }

    /// Marginalization identities, quasi detailed FTs, integral identity,
    /// EP averages, rate, and chain identities.
    pub fn markov_ft_suite(&self) -> Result<MarkovFtReport> {
        let n = self.n();
        let (fwd, bwd) = self.quasi_distributions();
        let mut rep = MarkovFtReport {
            forward_total: fwd.total(),
            backward_total: bwd.total(),
            ..Default::default()
        };

        let xs: Vec<usize> = (0..n).collect();
        let fx = fwd.marginalize(&xs);
        let bx = bwd.marginalize(&xs);
        for x in Lattice::uniform(self.dim(), n) {
            let pf = self.forward_joint(&x)?;
            let pb = self.backward_joint(&x)?;
            rep.forward_marginal_deviation = rep.forward_marginal_deviation.max((fx.get(&x) - pf).norm());
            rep.backward_marginal_deviation = rep.backward_marginal_deviation.max((bx.get(&x) - pb).norm());
        }
        rep.marginal_max_imag = fx.max_imag().max(bx.max_imag());

        let (v, mm) = self.pointwise(&fwd, &bwd, |k| self.ep_quasi_full(&QuasiOutcome::from_key(k, n)));
        rep.pointwise_violation = v;
        rep.support_mismatches += mm;

        let pad = |key: &[usize], positions: &[usize]| -> QuasiOutcome {
            let mut full = vec![0; self.key_len()];
            for (&p, &v) in positions.iter().zip(key) {
                full[p] = v;
            }
            QuasiOutcome::from_key(&full, n)
        };
        let keep1 = last_marginal_positions(n);
        let (v, mm) = self.pointwise(&fwd.marginalize(&keep1), &bwd.marginalize(&keep1), |k| {
            self.ep_quasi_r1(&pad(k, &keep1))
        });
        rep.r1_violation = v;
        rep.support_mismatches += mm;
        let keep2 = first_marginal_positions(n);
        let (v, mm) = self.pointwise(&fwd.marginalize(&keep2), &bwd.marginalize(&keep2), |k| {
            self.ep_quasi_r2(&pad(k, &keep2))
        });
        rep.r2_violation = v;
        rep.support_mismatches += mm;

        let zero = C64::new(0.0, 0.0);
        let (mut ef, mut e1, mut ar, mut ar1, mut ar2) = (zero, zero, zero, zero, zero);
        for (key, w) in fwd.iter() {
            if w.norm() == 0.0 {
                continue;
            }
            let q = QuasiOutcome::from_key(key, n);
            let (Some(r), Some(r1), Some(r2)) = (self.ep_quasi_full(&q), self.ep_quasi_r1(&q), self.ep_quasi_r2(&q))
            else {
                rep.support_mismatches += 1;
                continue;
            };
            ef += w * (-r).exp();
            e1 += w * (r1 - r).exp();
            ar += w * r;
            ar1 += w * r1;
            ar2 += w * r2;
            if let (Some(r1p), Some(r2p)) = (self.ep_quasi_r1_prime(&q), self.ep_quasi_r2_prime(&q)) {
                let dev = ((r1p + r2 - r).abs()).max((r1 + r2p - r).abs());
                rep.chain_deviation = rep.chain_deviation.max(dev);
            }
        }
        rep.integral_full = ef;
        rep.integral_r1 = e1;
        rep.avg_r = ar;
        rep.avg_r1 = ar1;
        rep.avg_r2 = ar2;
        rep.avg_r2_prime = self.avg_r2_prime_own_process();
        rep.rate = (ar - ar1).re;
        rep.rate_gap = (ar - ar1 - rep.avg_r2_prime).re;
        Ok(rep)
    }

    /// `⟨R′2⟩` under the two-time forward quasi process of the last step
    /// started from `ρ̃_1`.
    pub fn avg_r2_prime_own_process(&self) -> C64 {
        let n = self.n();
        let d = self.dim();
        let start = self.rho_tilde1();
        let t = &self.tables[n - 2];
        let mut acc = C64::new(0.0, 0.0);
        for key in Lattice::uniform(d, 6) {
            let (xa, xb) = (key[0], key[1]);
            let step = (key[2], key[3], key[4], key[5]);
            let w = self.pop(n - 2, &start, xa) * t.forward_factor(xa, xb, step);
            if w.norm() == 0.0 {
                continue;
            }
            let Some(base) = log_ratio(
                self.pop(n - 2, &start, xa),
                self.pop(n - 1, self.rho_tilde0.matrix(), xb),
            ) else {
                continue;
            };
            acc += w * (base + self.refs[n - 2].log_z(step.0, step.1, step.2, step.3));
        }
        acc
    }
}

fn validate_channels(channels: &[Superoperator], d: usize) -> Result<()> {
    for ch in channels {
        if ch.in_dim() != d || ch.out_dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: ch.in_dim() });
        }
        let tp = ch.tp_defect();
        if tp > TP_TOL {
            return Err(Error::NotTracePreserving(tp));
        }
        let cp = choi_of(ch).min_eigenvalue();
        if cp < -CP_TOL {
            return Err(Error::NotCompletelyPositive(cp));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{random_density, random_kraus, random_unitary};
    use crate::opstate::super_from_kraus;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_markov(d: usize, n: usize, seed: u64) -> MarkovProcess {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho0 = random_density(d, &mut rng);
        let channels = (0..n - 1)
            .map(|_| super_from_kraus(&random_kraus(d, 2, &mut rng)).unwrap())
            .collect();
        let bases = (0..n)
            .map(|_| MeasurementBasis::new(crate::channels::haar_unitary(d, &mut rng)).unwrap())
            .collect();
        let gammas = (0..n - 1).map(|_| random_density(d, &mut rng)).collect();
        MarkovProcess::new(rho0, channels, bases, gammas).unwrap()
    }

    #[test]
    fn key_round_trip_and_positions() {
        let q = QuasiOutcome {
            x: vec![0, 1, 0],
            i: vec![1, 0],
            j: vec![0, 0],
            kp: vec![1, 1],
            lp: vec![0, 1],
        };
        let key = q.to_key();
        assert_eq!(key, vec![0, 1, 0, 1, 0, 1, 0, 0, 0, 1, 1]);
        assert_eq!(QuasiOutcome::from_key(&key, 3), q);
        assert_eq!(last_marginal_positions(3), vec![0, 1, 3, 4, 5, 6]);
        assert_eq!(first_marginal_positions(3), vec![1, 2, 7, 8, 9, 10]);
    }

    #[test]
    fn identity_channels_reduce_to_closed() {
        let rho0 = DensityMatrix::diagonal(&[0.6, 0.4]).unwrap();
        let p = MarkovProcess::new(
            rho0.clone(),
            vec![Superoperator::identity(2); 2],
            vec![MeasurementBasis::computational(2); 3],
            vec![rho0.clone(), rho0.clone()],
        )
        .unwrap();
        assert!((p.forward_joint(&[0, 0, 0]).unwrap() - 0.6).abs() < 1e-15);
        // rho0 = gamma diagonal: every EP variant vanishes on diagonal indices
        let q = QuasiOutcome {
            x: vec![1, 1, 1],
            i: vec![0, 0],
            j: vec![0, 0],
            kp: vec![0, 0],
            lp: vec![0, 0],
        };
        for ep in [
            p.ep_quasi_full(&q),
            p.ep_quasi_r1(&q),
            p.ep_quasi_r2(&q),
            p.ep_quasi_r1_prime(&q),
            p.ep_quasi_r2_prime(&q),
        ] {
            assert!(ep.unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn unitary_embedding_matches_closed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let closed = ClosedProcess::new(
            random_density(2, &mut rng),
            vec![random_unitary(2, 1), random_unitary(2, 2)],
            (0..3).map(|t| MeasurementBasis::new(random_unitary(2, 10 + t)).unwrap()).collect(),
        )
        .unwrap();
        let mm = MarkovProcess::from_closed(&closed, vec![DensityMatrix::maximally_mixed(2); 2]).unwrap();
        for x in Lattice::uniform(2, 3) {
            assert!((mm.forward_joint(&x).unwrap() - closed.forward_joint(&x).unwrap()).abs() < 1e-14);
            assert!((mm.backward_joint(&x).unwrap() - closed.backward_joint(&x).unwrap()).abs() < 1e-11);
        }
        // Z-products are 1 for γ = I/d, so R reduces to the closed R
        for key in mm.quasi_outcomes().step_by(37) {
            let q = QuasiOutcome::from_key(&key, 3);
            let r = mm.ep_quasi_full(&q).unwrap();
            assert!((r - closed.ep_full(&q.x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn suite_on_random_instances() {
        for seed in 0..10 {
            let p = random_markov(2, 3, seed);
            let r = p.markov_ft_suite().unwrap();
            assert!((r.forward_total - 1.0).norm() < 1e-10);
            assert!((r.backward_total - 1.0).norm() < 1e-10);
            assert!(r.forward_marginal_deviation < 1e-12);
            assert!(r.backward_marginal_deviation < 1e-12);
            assert!(r.marginal_max_imag < 1e-12);
            assert!(r.pointwise_violation < 1e-10, "{}", r.pointwise_violation);
            assert!(r.r1_violation < 1e-10 && r.r2_violation < 1e-10);
            assert!((r.integral_r1 - 1.0).norm() < 1e-10);
            assert!((r.integral_full - 1.0).norm() < 1e-10);
            assert!(r.rate >= -1e-12);
            assert!(r.chain_deviation < 1e-11);
            assert_eq!(r.support_mismatches, 0);
        }
    }

    #[test]
    fn ep_ignores_interior_outcomes() {
        let p = random_markov(2, 3, 4);
        let mut q = QuasiOutcome::from_key(&[0, 0, 1, 1, 0, 1, 1, 0, 0, 1, 0], 3);
        let r = p.ep_quasi_full(&q).unwrap();
        q.x[1] = 1;
        assert_eq!(p.ep_quasi_full(&q).unwrap(), r);
    }

    #[test]
    fn classical_limit_is_nonnegative() {
        // Channels, states and bases all diagonal in the computational basis.
        let flip = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let ch = super_from_kraus(&[
            ComplexMatrix::identity(2).scale_real(0.8f64.sqrt()),
            flip.scale_real(0.2f64.sqrt()),
        ])
        .unwrap();
        let p = MarkovProcess::new(
            DensityMatrix::diagonal(&[0.9, 0.1]).unwrap(),
            vec![ch.clone(), ch],
            vec![MeasurementBasis::computational(2); 3],
            vec![DensityMatrix::diagonal(&[0.3, 0.7]).unwrap(); 2],
        )
        .unwrap();
        let (fwd, _) = p.quasi_distributions();
        assert!(fwd.max_imag() < 1e-15);
        assert!(fwd.min_real() >= -1e-15);
        assert!((fwd.total() - 1.0).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_tp_channel() {
        let rho = DensityMatrix::maximally_mixed(2);
        let bad = super_from_kraus(&[ComplexMatrix::diag(&[1.0, 0.5])]).unwrap();
        let res = MarkovProcess::new(
            rho.clone(),
            vec![bad],
            vec![MeasurementBasis::computational(2); 2],
            vec![rho],
        );
        assert!(matches!(res, Err(Error::NotTracePreserving(_))));
    }
}
