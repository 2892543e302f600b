//! The experiments behind each subcommand. Every experiment maps an
//! [`ExperimentConfig`] to report rows; instances run in parallel and rows
//! come back in instance order.

use log::{debug, info};
use rayon::prelude::*;

use qfluct_core::closed_ft::{ClosedProcess, EpKind};
use qfluct_core::ensembles::{
    align_final_basis, closed_instance, dilation_instance, kolmogorov_instance, markov_instance, DilationConfig,
    DilationKind, MarkovInstance,
};
use qfluct_core::outcome::Lattice;
use qfluct_core::{choi_of, petz_transpose_defect, DensityMatrix, DilatedProcess, C64};

use crate::config::{Experiment, ExperimentConfig};
use crate::oracle::{born_rule_joint, kraus_trajectory_joint};
use crate::report::{Check, ReportRow};

/// Threshold below which an EP rate counts as negative.
pub const NEGATIVE_RATE: f64 = -1e-6;

/// Slack on rate nonnegativity for memoryless processes.
pub const RATE_SLACK: f64 = 1e-12;

struct Rows<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    rows: Vec<ReportRow>,
}

impl<'a> Rows<'a> {
    fn new(cfg: &'a ExperimentConfig, seed: u64) -> Self {
        Self { cfg, seed, rows: Vec::new() }
    }

    fn push(&mut self, quantity: &str, value: f64, check: Check) {
        let check = match self.cfg.tolerance {
            Some(t) => check.with_tolerance(t),
            None => check,
        };
        self.rows.push(ReportRow::new(self.cfg.experiment.name(), self.seed, quantity, value, check));
    }

    fn small(&mut self, quantity: &str, value: f64, tol: f64) {
        self.push(quantity, value, Check::small(tol));
    }

    fn one(&mut self, quantity: &str, value: C64, tol: f64) {
        self.push(quantity, (value - 1.0).norm(), Check::small(tol));
    }

    fn info(&mut self, quantity: &str, value: f64) {
        self.push(quantity, value, Check::Info);
    }
}

type InstanceResult = qfluct_core::Result<Vec<ReportRow>>;

fn per_instance(cfg: &ExperimentConfig, f: impl Fn(usize) -> InstanceResult + Sync) -> InstanceResult {
    let chunks: Vec<Vec<ReportRow>> = (0..cfg.ensemble)
        .into_par_iter()
        .map(|i| {
            let rows = f(i)?;
            debug!("{} instance {i}: {} rows", cfg.experiment, rows.len());
            Ok(rows)
        })
        .collect::<qfluct_core::Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Runs the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> InstanceResult {
    info!("running {} with {} instances from seed {}", cfg.experiment, cfg.ensemble, cfg.seed);
    let rows = match cfg.experiment {
        Experiment::ClosedFt => per_instance(cfg, |i| closed_ft_rows(cfg, i)),
        Experiment::MarkovFt => per_instance(cfg, |i| markov_ft_rows(cfg, i)),
        Experiment::NonmarkovFt => per_instance(cfg, |i| nonmarkov_ft_rows(cfg, i)),
        Experiment::EpRateScan => ep_rate_scan(cfg),
        Experiment::MemoryAblation => per_instance(cfg, |i| memory_ablation_rows(cfg, i)),
        Experiment::Kolmogorov => per_instance(cfg, |i| kolmogorov_rows(cfg, i)),
        Experiment::OracleCheck => per_instance(cfg, |i| oracle_rows(cfg, i)),
    }?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    info!("{}: {} rows, {failed} failing", cfg.experiment, rows.len());
    Ok(rows)
}

fn closed_ft_rows(cfg: &ExperimentConfig, i: usize) -> InstanceResult {
    let (d, n, seed) = cfg.instance(i);
    let p = closed_instance(d, n, seed)?;
    let mut out = Rows::new(cfg, seed);
    for (kind, name) in [
        (EpKind::Full, "ft_full"),
        (EpKind::LastMarginal, "ft_r1"),
        (EpKind::FirstMarginal, "ft_r2"),
    ] {
        let rep = p.detailed_ft_check(kind)?;
        out.small(&format!("{name}_violation"), rep.max_violation, 1e-10);
        out.small(&format!("{name}_support_mismatches"), rep.support_mismatches.len() as f64, 0.0);
        out.small(&format!("{name}_histogram_violation"), rep.distribution_violation, 1e-10);
    }
    let integral = p.integral_ft_and_rate()?;
    out.push("integral_exp_minus_r", integral.mean_exp_minus_r, Check::Equal { target: 1.0, tol: 1e-10 });
    out.push(
        "integral_exp_minus_r_minus_r1",
        integral.mean_exp_minus_r_minus_r1,
        Check::Equal { target: 1.0, tol: 1e-10 },
    );
    out.push("rate", integral.rate, Check::AtLeast { bound: 0.0, tol: RATE_SLACK });
    out.info("avg_r", integral.avg_r);
    Ok(out.rows)
}

fn markov_for(cfg: &ExperimentConfig, i: usize) -> qfluct_core::Result<(u64, MarkovInstance)> {
    let (d, n, seed) = cfg.instance(i);
    Ok((seed, markov_instance(d, n, cfg.env_dim, cfg.reference, seed)?))
}

fn markov_ft_rows(cfg: &ExperimentConfig, i: usize) -> InstanceResult {
    let (seed, inst) = markov_for(cfg, i)?;
    let p = &inst.process;
    let mut out = Rows::new(cfg, seed);
    for ((ch, pair), rec) in p.channels().iter().zip(p.refs()).zip(p.recoveries()) {
        let restored = rec.apply(&ch.apply(pair.gamma.matrix()));
        let dist = DensityMatrix::new(restored.hermitian_part())?.trace_distance(&pair.gamma);
        out.small("petz_recovery_distance", dist, 1e-11);
        out.small("petz_tp_defect", rec.tp_defect(), 1e-10);
        out.push("petz_choi_min_eigenvalue", choi_of(rec).min_eigenvalue(), Check::AtLeast { bound: 0.0, tol: 1e-10 });
        out.small("petz_transpose_defect", petz_transpose_defect(ch, rec, pair), 1e-11);
    }
    let rep = p.markov_ft_suite()?;
    out.small("quasi_forward_marginal_deviation", rep.forward_marginal_deviation, 1e-12);
    out.small("quasi_backward_marginal_deviation", rep.backward_marginal_deviation, 1e-12);
    out.small("quasi_marginal_imag", rep.marginal_max_imag, 1e-12);
    out.one("forward_normalization_error", rep.forward_total, 1e-10);
    out.one("backward_normalization_error", rep.backward_total, 1e-10);
    out.small("quasi_ft_violation", rep.pointwise_violation, 1e-10);
    out.small("quasi_ft_r1_violation", rep.r1_violation, 1e-10);
    out.small("quasi_ft_r2_violation", rep.r2_violation, 1e-10);
    out.small("support_mismatches", rep.support_mismatches as f64, 0.0);
    out.small("chain_identity_deviation", rep.chain_deviation, 1e-11);
    out.one("integral_exp_minus_r_error", rep.integral_full, 1e-10);
    out.one("integral_exp_minus_r_minus_r1_error", rep.integral_r1, 1e-10);
    out.push("rate", rep.rate, Check::AtLeast { bound: 0.0, tol: RATE_SLACK });
    out.info("rate_imag", (rep.avg_r - rep.avg_r1).im);
    out.info("avg_r", rep.avg_r.re);
    Ok(out.rows)
}

fn dilation_cfg(cfg: &ExperimentConfig, d: usize, n: usize, kind: DilationKind) -> DilationConfig {
    DilationConfig {
        d_s: d,
        d_e: cfg.env_dim,
        n,
        kind,
        reference: cfg.reference,
        gamma_is_rho0: false,
    }
}

fn nonmarkov_ft_rows(cfg: &ExperimentConfig, i: usize) -> InstanceResult {
    let (d, n, seed) = cfg.instance(i);
    let p = dilation_instance(&dilation_cfg(cfg, d, n, cfg.coupling), seed)?;
    let mut out = Rows::new(cfg, seed);
    let rep = p.report()?;
    out.one("forward_normalization_error", rep.forward_total, 1e-10);
    out.one("backward_normalization_error", rep.backward_total, 1e-10);
    out.small("backward_marginal_imag", rep.backward_marginal_imag, 1e-12);
    out.small("forward_marginal_deviation", rep.forward_marginal_deviation, 1e-12);
    out.small("dephasing_deviation", rep.dephasing_deviation, 1e-12);
    out.small("average_identity_error", (rep.avg_r.re - rep.avg_r_formula).abs(), 1e-8);
    out.small("quasi_ft_violation", rep.pointwise_violation, 1e-9);
    out.small("history_r1_ft_violation", rep.history_r1_violation, 1e-9);
    out.small("undefined_history_weight", rep.undefined_history_weight, 1e-12);
    out.small("trace_condition_defect", rep.tpc_defect, 1e-11);
    out.info("avg_r", rep.avg_r.re);
    out.info("rate_imag", (rep.avg_r - rep.avg_r1_history).im);
    out.info("rate_prime", rep.rate_prime);
    let memoryless = matches!(
        cfg.coupling,
        DilationKind::Product | DilationKind::Collision | DilationKind::Closed
    );
    if memoryless {
        out.small("marginal_r2_ft_violation", rep.marginal_r2_violation, 1e-10);
        out.push("rate", rep.rate_history, Check::AtLeast { bound: 0.0, tol: RATE_SLACK });
    } else {
        out.info("marginal_r2_ft_violation", rep.marginal_r2_violation);
        out.info("rate", rep.rate_history);
    }
    if cfg.coupling == DilationKind::Product {
        markov_reduction_rows(&p, &mut out)?;
    }
    let control = DilationConfig {
        gamma_is_rho0: true,
        ..dilation_cfg(cfg, d, n, cfg.coupling)
    };
    let at_reference = dilation_instance(&control, seed)?;
    out.small("avg_r_at_reference", at_reference.avg_ep().norm(), 1e-10);
    Ok(out.rows)
}

/// Largest deviations between a product dilation and its Markov reduction.
pub fn markov_reduction_deviations(p: &DilatedProcess) -> qfluct_core::Result<[f64; 3]> {
    let m = p.measured_markov_reduction()?;
    let n = p.n();
    let mut joint: f64 = 0.0;
    for x in Lattice::uniform(p.system_dim(), n) {
        joint = joint.max((p.forward_with_dephasing(&x)? - m.forward_joint(&x)?).abs());
    }
    let (nf, nb) = p.quasi_distributions();
    let (mf, mb) = m.quasi_distributions();
    let quasi = nf.max_deviation(&mf).max(nb.max_deviation(&mb));
    let mut ep: f64 = 0.0;
    for (key, w) in nf.iter() {
        if w.norm() <= 1e-13 {
            continue;
        }
        let q = qfluct_core::QuasiOutcome::from_key(key, n);
        if let (Some(a), Some(b)) = (p.ep_nonmarkov_full(&q), m.ep_quasi_full(&q)) {
            ep = ep.max((a - b).abs());
        }
        if let (Some(a), Some(b)) = (p.ep_r1_prime(&q), m.ep_quasi_r1_prime(&q)) {
            ep = ep.max((a - b).abs());
        }
    }
    Ok([joint, quasi, ep])
}

fn markov_reduction_rows(p: &DilatedProcess, out: &mut Rows) -> qfluct_core::Result<()> {
    let [joint, quasi, ep] = markov_reduction_deviations(p)?;
    out.small("markov_reduction_joint_deviation", joint, 1e-10);
    out.small("markov_reduction_quasi_deviation", quasi, 1e-10);
    out.small("markov_reduction_ep_deviation", ep, 1e-10);
    Ok(())
}

/// Rate of one scan instance.
pub fn scan_rate(cfg: &ExperimentConfig, i: usize) -> qfluct_core::Result<(u64, f64, f64)> {
    let (d, n, seed) = cfg.instance(i);
    let p = dilation_instance(&dilation_cfg(cfg, d, n, cfg.coupling), seed)?;
    let rep = p.report()?;
    Ok((seed, rep.rate_history, rep.rate_prime))
}

fn ep_rate_scan(cfg: &ExperimentConfig) -> InstanceResult {
    let rates: Vec<(u64, f64, f64)> = (0..cfg.ensemble)
        .into_par_iter()
        .map(|i| scan_rate(cfg, i))
        .collect::<qfluct_core::Result<_>>()?;
    let mut out = Rows::new(cfg, cfg.seed);
    for &(seed, rate, prime) in &rates {
        out.seed = seed;
        out.info("rate", rate);
        out.info("rate_prime", prime);
    }
    out.seed = cfg.seed;
    let negatives = rates.iter().filter(|r| r.1 < NEGATIVE_RATE).count() as f64;
    let min = rates.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    out.info("min_rate", min);
    let check = match cfg.coupling {
        DilationKind::Coupled | DilationKind::SwapDominated => Check::AtLeast { bound: 1.0, tol: 0.0 },
        _ => Check::AtMost { bound: 0.0, tol: 0.0 },
    };
    // A count, not a measured error: the tolerance override does not apply.
    out.rows.push(ReportRow::new(cfg.experiment.name(), cfg.seed, "negative_rate_count", negatives, check));
    Ok(out.rows)
}

/// `⟨R⟩` with intermediate measurements, without them (single step with the
/// composed unitary), and with the environment refreshed before every step.
pub fn memory_ablation_averages(p: &DilatedProcess) -> qfluct_core::Result<[f64; 3]> {
    let measured = p.avg_ep().re;
    let unmeasured = align_final_basis(&p.two_time_variant()?)?.avg_ep().re;
    let refreshed = align_final_basis(&p.collision_variant()?)?.avg_ep().re;
    Ok([measured, unmeasured, refreshed])
}

fn memory_ablation_rows(cfg: &ExperimentConfig, i: usize) -> InstanceResult {
    let (d, n, seed) = cfg.instance(i);
    let p = dilation_instance(&dilation_cfg(cfg, d, n, cfg.coupling), seed)?;
    let [a, b, c] = memory_ablation_averages(&p)?;
    let mut out = Rows::new(cfg, seed);
    out.info("avg_r_measured", a);
    out.info("avg_r_unmeasured", b);
    out.info("avg_r_refreshed", c);
    out.info("unmeasured_minus_measured", b - a);
    match cfg.coupling {
        // Refreshing is a no-op when no correlations form.
        DilationKind::Product | DilationKind::Closed => out.small("measured_refreshed_gap", (a - c).abs(), 1e-10),
        _ => out.info("measured_refreshed_gap", (a - c).abs()),
    }
    Ok(out.rows)
}

/// Largest `|R1 + R2 − R|` over the paths of a closed process.
pub fn chain_violation(p: &ClosedProcess) -> f64 {
    let mut worst: f64 = 0.0;
    for x in p.paths() {
        if let (Some(r), Some(r1), Some(r2)) = (
            p.ep(EpKind::Full, &x),
            p.ep(EpKind::LastMarginal, &x),
            p.ep(EpKind::FirstMarginal, &x),
        ) {
            worst = worst.max((r1 + r2 - r).abs());
        }
    }
    worst
}

fn kolmogorov_rows(cfg: &ExperimentConfig, i: usize) -> InstanceResult {
    let (d, n, seed) = cfg.instance(i);
    let p = kolmogorov_instance(d, n, seed)?;
    let mut out = Rows::new(cfg, seed);
    out.small("kolmogorov_deviation", p.kolmogorov_check()?, 1e-12);
    out.small("chain_violation", chain_violation(&p), 1e-12);
    Ok(out.rows)
}

/// Largest deviation between the superoperator joint and the Born-rule oracle.
pub fn born_oracle_deviation(p: &ClosedProcess) -> qfluct_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for x in p.paths() {
        worst = worst.max((p.forward_joint(&x)? - born_rule_joint(p, &x)).abs());
    }
    Ok(worst)
}

/// Largest deviation between the Markov joint and the Kraus-trajectory oracle.
pub fn kraus_oracle_deviation(inst: &MarkovInstance) -> qfluct_core::Result<f64> {
    let p = &inst.process;
    let mut worst: f64 = 0.0;
    for x in Lattice::uniform(p.dim(), p.n()) {
        let oracle = kraus_trajectory_joint(p.rho0(), &inst.kraus, p.bases(), &x);
        worst = worst.max((p.forward_joint(&x)? - oracle).abs());
    }
    Ok(worst)
}

fn oracle_rows(cfg: &ExperimentConfig, i: usize) -> InstanceResult {
    let (d, n, seed) = cfg.instance(i);
    let mut out = Rows::new(cfg, seed);
    out.small("born_oracle_deviation", born_oracle_deviation(&closed_instance(d, n, seed)?)?, 1e-10);
    let (_, inst) = markov_for(cfg, i)?;
    out.small("kraus_oracle_deviation", kraus_oracle_deviation(&inst)?, 1e-11);
    Ok(out.rows)
}
