use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qfluct_bench::{closed, dilation, markov};
use qfluct_core::closed_ft::EpKind;
use qfluct_core::{herm_eig, petz_recovery, random_channel, random_density, REGULARIZATION_EPS};
use rand::SeedableRng;

fn linalg(c: &mut Criterion) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut group = c.benchmark_group("linalg");
    for d in [2, 4, 8] {
        let rho = random_density(d, &mut rng);
        group.bench_with_input(BenchmarkId::new("herm_eig", d), &rho, |b, rho| {
            b.iter(|| herm_eig(black_box(rho.matrix())))
        });
    }
    for d in [2, 3] {
        let ch = random_channel(d, 2, 5);
        let g = random_density(d, &mut rng).regularized(REGULARIZATION_EPS);
        group.bench_with_input(BenchmarkId::new("petz_recovery", d), &d, |b, _| {
            b.iter(|| petz_recovery(black_box(&ch), black_box(&g)))
        });
    }
    group.finish();
}

fn closed_ft(c: &mut Criterion) {
    let mut group = c.benchmark_group("closed_ft");
    for (d, n) in [(2, 3), (3, 4)] {
        let p = closed(d, n);
        group.bench_function(BenchmarkId::new("detailed_ft", format!("d{d}_n{n}")), |b| {
            b.iter(|| p.detailed_ft_check(black_box(EpKind::Full)))
        });
    }
    group.finish();
}

fn markov_ft(c: &mut Criterion) {
    let p = markov(2, 3);
    c.bench_function("markov_ft/suite_d2_n3", |b| b.iter(|| black_box(&p).markov_ft_suite()));
}

fn nonmarkov_ft(c: &mut Criterion) {
    let mut group = c.benchmark_group("nonmarkov_ft");
    group.sample_size(10);
    for n in [3, 4] {
        let p = dilation(n);
        group.bench_function(BenchmarkId::new("report", n), |b| b.iter(|| black_box(&p).report()));
    }
    group.finish();
}

criterion_group!(benches, linalg, closed_ft, markov_ft, nonmarkov_ft);
criterion_main!(benches);
