//! Acceptance suite: one line per criterion, then a single assertion that
//! every criterion passed. Run with `--nocapture` to see the lines.

use std::time::{Duration, Instant};

use qfluct_cli::experiments;
use qfluct_cli::report::{max_of, min_of, ReportRow};
use qfluct_cli::{Experiment, ExperimentConfig};
use qfluct_core::ensembles::{DilationKind, ReferencePolicy};

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn config(experiment: Experiment, f: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(experiment);
    f(&mut cfg);
    cfg.validate().expect("valid acceptance config");
    cfg
}

fn timed(cfg: &ExperimentConfig) -> (Vec<ReportRow>, Duration) {
    let start = Instant::now();
    let rows = experiments::run(cfg).expect("experiment runs");
    (rows, start.elapsed())
}

/// Largest `|value − 1|` over rows reporting a normalized average directly.
fn max_dev_from_one(rows: &[ReportRow], quantity: &str) -> f64 {
    rows.iter()
        .filter(|r| r.quantity == quantity)
        .map(|r| (r.value - 1.0).abs())
        .fold(0.0, f64::max)
}

fn count(rows: &[ReportRow], quantity: &str) -> usize {
    rows.iter().filter(|r| r.quantity == quantity).count()
}

#[test]
fn acceptance() {
    let mut outcomes = Vec::new();
    let mut record = |id, name, pass, detail: String| outcomes.push(Outcome { id, name, pass, detail });

    // Closed ensemble: d ∈ {2,3}, n ∈ {2,3,4}, 200 instances.
    let closed_cfg = config(Experiment::ClosedFt, |c| {
        c.dims = vec![2, 3];
        c.steps = vec![2, 3, 4];
        c.ensemble = 200;
    });
    let (closed, closed_time) = timed(&closed_cfg);
    let full = max_of(&closed, "ft_full_violation");
    let mismatches = max_of(&closed, "ft_full_support_mismatches");
    record(
        1,
        "closed detailed FT",
        full <= 1e-10 && mismatches == 0.0 && closed_time <= Duration::from_secs(60),
        format!(
            "max relative violation {full:.2e} (<= 1e-10), support mismatches {mismatches}, {} instances in {:.1} s (<= 60 s)",
            count(&closed, "ft_full_violation"),
            closed_time.as_secs_f64()
        ),
    );

    let r1 = max_of(&closed, "ft_r1_violation");
    let r2 = max_of(&closed, "ft_r2_violation");
    record(
        2,
        "closed marginal FTs",
        r1 <= 1e-10 && r2 <= 1e-10,
        format!("R1 {r1:.2e}, R2 {r2:.2e} (<= 1e-10)"),
    );

    // Markov ensemble: d = 2, n = 3, 100 instances, random references.
    let markov_cfg = config(Experiment::MarkovFt, |c| {
        c.ensemble = 100;
        c.reference = ReferencePolicy::Random;
    });
    let (markov, _) = timed(&markov_cfg);

    let i_full = max_dev_from_one(&closed, "integral_exp_minus_r");
    let i_r1 = max_dev_from_one(&closed, "integral_exp_minus_r_minus_r1");
    let q_full = max_of(&markov, "integral_exp_minus_r_error");
    let q_r1 = max_of(&markov, "integral_exp_minus_r_minus_r1_error");
    record(
        3,
        "integral identities",
        i_full.max(i_r1).max(q_full).max(q_r1) <= 1e-10,
        format!(
            "closed |<e^-R> - 1| {i_full:.2e}, |<e^-(R-R1)> - 1| {i_r1:.2e}; Markov {q_full:.2e}, {q_r1:.2e} (<= 1e-10)"
        ),
    );

    let closed_rate = min_of(&closed, "rate");
    let markov_rate = min_of(&markov, "rate");
    record(
        4,
        "rate nonnegativity",
        closed_rate >= -1e-12 && markov_rate >= -1e-12,
        format!("min <R> - <R1>: closed {closed_rate:.2e}, Markov {markov_rate:.2e} (>= -1e-12)"),
    );

    let kolmo_cfg = config(Experiment::Kolmogorov, |c| {
        c.dims = vec![2, 3];
        c.steps = vec![3, 4];
        c.ensemble = 60;
    });
    let (kolmo, _) = timed(&kolmo_cfg);
    let kdev = max_of(&kolmo, "kolmogorov_deviation");
    let kchain = max_of(&kolmo, "chain_violation");
    record(
        5,
        "Kolmogorov construction",
        kdev <= 1e-12 && kchain <= 1e-12,
        format!("consistency {kdev:.2e}, |R1 + R2 - R| {kchain:.2e} (<= 1e-12)"),
    );

    // Petz pairs: one channel per instance, d ∈ {2,3}.
    let petz_cfg = config(Experiment::MarkovFt, |c| {
        c.dims = vec![2, 3];
        c.steps = vec![2];
        c.ensemble = 100;
        c.reference = ReferencePolicy::Random;
    });
    let (petz, _) = timed(&petz_cfg);
    let dist = max_of(&petz, "petz_recovery_distance");
    let choi = min_of(&petz, "petz_choi_min_eigenvalue");
    let tp = max_of(&petz, "petz_tp_defect");
    let transpose = max_of(&petz, "petz_transpose_defect");
    record(
        6,
        "Petz recovery",
        dist <= 1e-11 && choi >= -1e-10 && tp <= 1e-10 && transpose <= 1e-11,
        format!(
            "{} pairs: recovery distance {dist:.2e} (<= 1e-11), Choi min {choi:.2e} (>= -1e-10), TP {tp:.2e} (<= 1e-10), transpose {transpose:.2e} (<= 1e-11)",
            count(&petz, "petz_recovery_distance")
        ),
    );

    let fm = max_of(&markov, "quasi_forward_marginal_deviation");
    let bm = max_of(&markov, "quasi_backward_marginal_deviation");
    let norm = max_of(&markov, "forward_normalization_error").max(max_of(&markov, "backward_normalization_error"));
    let qft = max_of(&markov, "quasi_ft_violation");
    let chain = max_of(&markov, "chain_identity_deviation");
    record(
        7,
        "Markov quasiprobability",
        fm <= 1e-12 && bm <= 1e-12 && norm <= 1e-10 && qft <= 1e-10 && chain <= 1e-11,
        format!(
            "marginalization {fm:.2e}/{bm:.2e} (<= 1e-12), normalization {norm:.2e} (<= 1e-10), pointwise FT {qft:.2e} (<= 1e-10), chain {chain:.2e} (<= 1e-11)"
        ),
    );

    let nm_cfg = config(Experiment::NonmarkovFt, |c| c.ensemble = 50);
    let (nm, _) = timed(&nm_cfg);
    let bnorm = max_of(&nm, "backward_normalization_error");
    let avg = max_of(&nm, "average_identity_error");
    let at_ref = max_of(&nm, "avg_r_at_reference");
    record(
        8,
        "non-Markov normalization and average EP",
        bnorm <= 1e-10 && avg <= 1e-8 && at_ref <= 1e-10,
        format!(
            "backward normalization {bnorm:.2e} (<= 1e-10), average identity {avg:.2e} (<= 1e-8), rho0 = gamma0 |<R>| {at_ref:.2e} (<= 1e-10)"
        ),
    );

    let product_cfg = config(Experiment::NonmarkovFt, |c| {
        c.ensemble = 20;
        c.coupling = DilationKind::Product;
        c.reference = ReferencePolicy::Random;
    });
    let (product, _) = timed(&product_cfg);
    let rj = max_of(&product, "markov_reduction_joint_deviation");
    let rq = max_of(&product, "markov_reduction_quasi_deviation");
    let re = max_of(&product, "markov_reduction_ep_deviation");
    record(
        9,
        "Markov reduction of product dilations",
        rj.max(rq).max(re) <= 1e-10,
        format!("joint {rj:.2e}, quasi {rq:.2e}, EP {re:.2e} (<= 1e-10)"),
    );

    let scan_start = Instant::now();
    let scan = |kind: DilationKind, ensemble: usize, env_dim: usize| {
        let cfg = config(Experiment::EpRateScan, |c| {
            c.coupling = kind;
            c.ensemble = ensemble;
            c.env_dim = env_dim;
        });
        let rows = experiments::run(&cfg).expect("scan runs");
        (max_of(&rows, "negative_rate_count"), min_of(&rows, "rate"))
    };
    let (coupled_neg, coupled_min) = scan(DilationKind::Coupled, 1000, 2);
    let (product_neg, _) = scan(DilationKind::Product, 1000, 2);
    let (collision_neg, _) = scan(DilationKind::Collision, 200, 2);
    let (closed_neg, _) = scan(DilationKind::Closed, 1000, 1);
    let scan_time = scan_start.elapsed();
    record(
        10,
        "negative EP rate with memory",
        coupled_neg >= 1.0
            && product_neg == 0.0
            && collision_neg == 0.0
            && closed_neg == 0.0
            && markov_rate >= -1e-6
            && scan_time <= Duration::from_secs(600),
        format!(
            "coupled: {coupled_neg} of 1000 below -1e-6 (min {coupled_min:.3e}); controls product {product_neg}, refreshed {collision_neg}, closed {closed_neg}, Markov min rate {markov_rate:.2e}; {:.0} s (<= 600 s)",
            scan_time.as_secs_f64()
        ),
    );

    let collision_cfg = config(Experiment::NonmarkovFt, |c| {
        c.ensemble = 10;
        c.coupling = DilationKind::Collision;
    });
    let (collision, _) = timed(&collision_cfg);
    let witness = max_of(&nm, "marginal_r2_ft_violation");
    let markovian = max_of(&product, "marginal_r2_ft_violation")
        .max(max_of(&collision, "marginal_r2_ft_violation"))
        .max(max_of(&markov, "quasi_ft_r2_violation"));
    record(
        11,
        "marginal FT failure with memory",
        witness > 1e-3 && markovian <= 1e-10,
        format!("coupled max violation {witness:.3e} (> 1e-3); Markovian max {markovian:.2e} (<= 1e-10)"),
    );

    let oracle_cfg = config(Experiment::OracleCheck, |c| {
        c.dims = vec![2, 3];
        c.steps = vec![2, 3, 4];
        c.ensemble = 100;
    });
    let (oracle, _) = timed(&oracle_cfg);
    let born = max_of(&oracle, "born_oracle_deviation");
    let kraus = max_of(&oracle, "kraus_oracle_deviation");
    record(
        12,
        "oracle equivalence",
        born <= 1e-10 && kraus <= 1e-11,
        format!("Born rule {born:.2e} (<= 1e-10), Kraus trajectories {kraus:.2e} (<= 1e-11), 100 instances each"),
    );

    for o in &outcomes {
        println!(
            "[{}] {:02} {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.detail
        );
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
