use proptest::prelude::*;
use qfluct_core::closed_ft::EpKind;
use qfluct_core::ensembles::{closed_instance, markov_instance, ReferencePolicy};
use qfluct_core::{
    choi_of, mat_power, partial_trace, petz_recovery, random_channel, random_unitary, relative_entropy,
    ComplexMatrix, DensityMatrix, C64,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state(d: usize, seed: u64) -> DensityMatrix {
    qfluct_core::random_density(d, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn haar_unitaries_are_unitary(d in 1usize..5, seed in any::<u64>()) {
        let u = random_unitary(d, seed);
        let defect = (&u.adjoint().matmul(&u) - &ComplexMatrix::identity(d)).max_abs();
        prop_assert!(defect < 1e-12);
    }

    #[test]
    fn random_channels_are_cptp(d in 2usize..4, env in 1usize..4, seed in any::<u64>()) {
        let ch = random_channel(d, env, seed);
        prop_assert!(ch.tp_defect() < 1e-12);
        prop_assert!(choi_of(&ch).min_eigenvalue() > -1e-12);
    }

    #[test]
    fn petz_recovers_reference(d in 2usize..4, seed in any::<u64>()) {
        let ch = random_channel(d, 2, seed);
        let g = state(d, seed ^ 0x5eed);
        let r = petz_recovery(&ch, &g).unwrap();
        let back = r.apply(&ch.apply(g.matrix()));
        prop_assert!((&back - g.matrix()).max_abs() < 1e-10);
        prop_assert!(r.tp_defect() < 1e-10);
        prop_assert!(choi_of(&r).min_eigenvalue() > -1e-10);
    }

    #[test]
    fn matrix_powers_compose(d in 1usize..5, seed in any::<u64>(), a in -1.0f64..1.0) {
        let rho = state(d, seed);
        let x = mat_power(rho.matrix(), a).unwrap();
        let y = mat_power(rho.matrix(), -a).unwrap();
        prop_assert!((&x.matmul(&y) - &ComplexMatrix::identity(d)).max_abs() < 1e-8);
    }

    #[test]
    fn partial_trace_of_product(da in 1usize..4, db in 1usize..4, seed in any::<u64>()) {
        let a = state(da, seed);
        let b = state(db, seed.wrapping_add(1));
        let ab = a.matrix().kron(b.matrix());
        prop_assert!((&partial_trace(&ab, &[da, db], 0).unwrap() - a.matrix()).max_abs() < 1e-12);
        prop_assert!((&partial_trace(&ab, &[da, db], 1).unwrap() - b.matrix()).max_abs() < 1e-12);
    }

    #[test]
    fn relative_entropy_is_monotone_under_channels(d in 2usize..4, seed in any::<u64>()) {
        let rho = state(d, seed);
        let sigma = state(d, seed.wrapping_mul(31).wrapping_add(7));
        let ch = random_channel(d, 2, seed);
        let before = relative_entropy(rho.matrix(), sigma.matrix()).unwrap();
        let after = relative_entropy(&ch.apply(rho.matrix()), &ch.apply(sigma.matrix())).unwrap();
        prop_assert!(before >= -1e-12);
        prop_assert!(after <= before + 1e-9);
    }

    #[test]
    fn closed_integral_ft(d in 2usize..4, n in 2usize..5, seed in any::<u64>()) {
        let p = closed_instance(d, n, seed).unwrap();
        let rep = p.integral_ft_and_rate().unwrap();
        prop_assert!((rep.mean_exp_minus_r - 1.0).abs() < 1e-10);
        prop_assert!(rep.rate >= -1e-12);
        prop_assert!(p.detailed_ft_check(EpKind::Full).unwrap().max_violation < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn markov_quasi_normalization(seed in any::<u64>()) {
        let inst = markov_instance(2, 3, 2, ReferencePolicy::Random, seed).unwrap();
        let (f, b) = inst.process.quasi_distributions();
        prop_assert!((f.total() - C64::new(1.0, 0.0)).norm() < 1e-10);
        prop_assert!((b.total() - C64::new(1.0, 0.0)).norm() < 1e-10);
    }
}
