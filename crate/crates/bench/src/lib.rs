//! Benchmark fixtures shared by the criterion benches.

use qfluct_core::closed_ft::ClosedProcess;
use qfluct_core::ensembles::{closed_instance, dilation_instance, markov_instance, DilationConfig, ReferencePolicy};
use qfluct_core::{DilatedProcess, MarkovProcess};

pub fn closed(d: usize, n: usize) -> ClosedProcess {
    closed_instance(d, n, 1).expect("closed fixture")
}

pub fn markov(d: usize, n: usize) -> MarkovProcess {
    markov_instance(d, n, 2, ReferencePolicy::Random, 1)
        .expect("Markov fixture")
        .process
}

pub fn dilation(n: usize) -> DilatedProcess {
    dilation_instance(&DilationConfig { n, ..Default::default() }, 1).expect("dilation fixture")
}
