//! Entropy production and fluctuation theorems for multitime quantum
//! processes, verified by exact enumeration.
//!
//! The crate builds closed (unitary), Markovian (independent CPTP steps) and
//! non-Markovian (system–environment dilation) multitime processes, computes
//! their forward and backward joint distributions and quasiprobability
//! distributions, and evaluates the associated entropy productions together
//! with their detailed and integral fluctuation relations.
//!
//! Index conventions are global: operators are vectorized row-major, so the
//! matrix unit `|i⟩⟨j|` of a `d`-dimensional space sits at index `i·d + j`.

pub mod channels;
pub mod closed_ft;
pub mod ensembles;
pub mod linalg;
pub mod markov_ft;
pub mod nonmarkov_ft;
pub mod opstate;
pub mod outcome;

pub use channels::{
    dephasing_map, haar_unitary, petz_recovery, petz_transpose_defect, random_channel, random_density, random_kraus,
    random_unitary, rescaling_map, z_factor, MeasurementBasis, ReferencePair, REGULARIZATION_EPS,
};

pub use markov_ft::{MarkovFtReport, MarkovProcess, QuasiOutcome};
pub use closed_ft::{ClosedProcess, EpDirection, EpKind, EPDistribution, FtReport, IntegralReport, OutcomePath};
pub use linalg::{
    herm_eig, kron, mat_power, partial_trace, relative_entropy, ComplexMatrix, DensityMatrix,
    HermitianEigensystem, C64,
};


pub use nonmarkov_ft::{ConditionalEnvState, DilatedProcess, GammaTrajectory, NonMarkovReport};
pub use opstate::{choi_of, super_from_kraus, ChoiMatrix, OperatorVector, Superoperator, Tristate};
pub use outcome::OutcomeDistribution;

/// Errors raised by constructors and engines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix has a zero dimension")]
    EmptyMatrix,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite matrix entry {0}")]
    NonFinite(String),
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("trace {0} is not 1")]
    InvalidTrace(f64),
    #[error("index {index} out of range (bound {bound})")]
    InvalidIndex { index: usize, bound: usize },
    #[error("matrix is not unitary (defect {0:.3e})")]
    NotUnitary(f64),
    #[error("map is not trace preserving (defect {0:.3e})")]
    NotTracePreserving(f64),
    #[error("map is not completely positive (min Choi eigenvalue {0:.3e})")]
    NotCompletelyPositive(f64),
    #[error("support violation: {0}")]
    SupportViolation(String),
    #[error("invalid process: {0}")]
    InvalidProcess(String),
    #[error("imaginary residue {0:.3e} in a quantity that must be real")]
    ImaginaryResidue(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
