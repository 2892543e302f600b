//! Operator-state formalism: operators as vectors, maps as matrices.
//!
//! An operator `O` on a `d`-dimensional space is the vector `|O)` whose
//! component `(i, j)` (index `i·d + j`) is the coefficient of `Π_ij = |i⟩⟨j|`.
//! The inner product is `(A|B) = Tr(A†B)`. A linear map `S` from `d×d` to
//! `d′×d′` operators is the `d′² × d²` matrix with entries
//! `(Π_kl|S|Π_ij) = S(Π_ij)[k, l]`.

use crate::linalg::{herm_eig, ComplexMatrix, C64};
use crate::{Error, Result};

/// Tolerance on the trace-preservation defect.
pub const TP_TOL: f64 = 1e-10;
/// Tolerance on the minimum Choi eigenvalue.
pub const CP_TOL: f64 = 1e-10;

/// Vectorized operator.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorVector {
    dim: usize,
    components: Vec<C64>,
}

impl OperatorVector {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[C64] {
        &self.components
    }

    /// Component multiplying `Π_ij`.
    pub fn component(&self, i: usize, j: usize) -> C64 {
        self.components[i * self.dim + j]
    }

    /// `(self|other)`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// `|O)` for a square operator.
pub fn vectorize(o: &ComplexMatrix) -> Result<OperatorVector> {
    if !o.is_square() {
        return Err(Error::NotSquare(o.rows(), o.cols()));
    }
    Ok(OperatorVector {
        dim: o.rows(),
        components: o.to_row_major(),
    })
}

pub fn devectorize(v: &OperatorVector) -> ComplexMatrix {
    ComplexMatrix::from_row_major(v.dim, v.dim, &v.components).expect("valid operator vector")
}

/// The matrix unit `Π_ij` of the computational basis.
pub fn matrix_unit(d: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(d, d);
    m[(i, j)] = C64::new(1.0, 0.0);
    m
}

/// Yes / no / not yet evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tristate {
    Yes,
    No,
    Unchecked,
}

impl From<bool> for Tristate {
    fn from(b: bool) -> Self {
        if b {
            Tristate::Yes
        } else {
            Tristate::No
        }
    }
}

/// Linear map on operators in matrix form.
#[derive(Clone, Debug)]
pub struct Superoperator {
    in_dim: usize,
    out_dim: usize,
    matrix: ComplexMatrix,
    tp: Tristate,
    cp: Tristate,
}

impl PartialEq for Superoperator {
    fn eq(&self, other: &Self) -> bool {
        self.in_dim == other.in_dim && self.out_dim == other.out_dim && self.matrix == other.matrix
    }
}

impl Superoperator {
    /// Wraps a `d′² × d²` matrix. Flags start unchecked.
    pub fn from_matrix(in_dim: usize, out_dim: usize, matrix: ComplexMatrix) -> Result<Self> {
        if matrix.rows() != out_dim * out_dim || matrix.cols() != in_dim * in_dim {
            return Err(Error::DimensionMismatch {
                expected: out_dim * out_dim * in_dim * in_dim,
                found: matrix.rows() * matrix.cols(),
            });
        }
        Ok(Self {
            in_dim,
            out_dim,
            matrix,
            tp: Tristate::Unchecked,
            cp: Tristate::Unchecked,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            in_dim: d,
            out_dim: d,
            matrix: ComplexMatrix::identity(d * d),
            tp: Tristate::Yes,
            cp: Tristate::Yes,
        }
    }

    /// `X ↦ U X U†`.
    pub fn unitary(u: &ComplexMatrix) -> Self {
        super_from_kraus(std::slice::from_ref(u)).expect("single Kraus operator has a shape")
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn tp_flag(&self) -> Tristate {
        self.tp
    }

    pub fn cp_flag(&self) -> Tristate {
        self.cp
    }

    /// Evaluates and caches both flags.
    pub fn checked(mut self) -> Self {
        self.tp = (self.tp_defect() <= TP_TOL).into();
        self.cp = (choi_of(&self).min_eigenvalue() >= -CP_TOL).into();
        self
    }

    /// `max_{ij} |(I|S|Π_ij) − δ_ij|`.
    pub fn tp_defect(&self) -> f64 {
        let (di, dout) = (self.in_dim, self.out_dim);
        let mut worst: f64 = 0.0;
        for i in 0..di {
            for j in 0..di {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..dout {
                    acc += self.matrix[(a * dout + a, i * di + j)];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc - target).norm());
            }
        }
        worst
    }

    pub fn is_tp(&self) -> bool {
        match self.tp {
            Tristate::Unchecked => self.tp_defect() <= TP_TOL,
            t => t == Tristate::Yes,
        }
    }

    pub fn is_cp(&self) -> bool {
        match self.cp {
            Tristate::Unchecked => choi_of(self).min_eigenvalue() >= -CP_TOL,
            t => t == Tristate::Yes,
        }
    }

    /// `S(X)`.
    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(x.rows(), self.in_dim, "operator dimension does not match map input");
        let v = x.to_row_major();
        let d = self.out_dim;
        let n = v.len();
        ComplexMatrix::from_fn(d, d, |k, l| {
            let row = k * d + l;
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..n {
                acc += self.matrix[(row, c)] * v[c];
            }
            acc
        })
    }

    /// `self ∘ first`.
    pub fn compose(&self, first: &Superoperator) -> Result<Superoperator> {
        if first.out_dim != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                found: first.out_dim,
            });
        }
        Superoperator::from_matrix(first.in_dim, self.out_dim, self.matrix.matmul(&first.matrix))
    }

    /// `(Π_kl|S|Π_ij)` in the computational bases.
    pub fn element(&self, k: usize, l: usize, i: usize, j: usize) -> C64 {
        self.matrix[(k * self.out_dim + l, i * self.in_dim + j)]
    }

    /// `(A|S|B) = Tr(A† S(B))`.
    pub fn sandwich(&self, a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
        a.inner(&self.apply(b))
    }
}

/// `X ↦ Σ_k K_k X K_k†`.
pub fn super_from_kraus(kraus: &[ComplexMatrix]) -> Result<Superoperator> {
    let first = kraus.first().ok_or(Error::InvalidProcess("empty Kraus list".into()))?;
    let (dout, din) = (first.rows(), first.cols());
    let mut m = ComplexMatrix::zeros(dout * dout, din * din);
    let mut completeness = ComplexMatrix::zeros(din, din);
    for k in kraus {
        if k.rows() != dout || k.cols() != din {
            return Err(Error::DimensionMismatch {
                expected: dout * din,
                found: k.rows() * k.cols(),
            });
        }
        m = &m + &k.kron(&k.conj());
        completeness = &completeness + &k.adjoint().matmul(k);
    }
    let tp = (&completeness - &ComplexMatrix::identity(din)).max_abs() <= TP_TOL;
    Ok(Superoperator {
        in_dim: din,
        out_dim: dout,
        matrix: m,
        tp: tp.into(),
        cp: Tristate::Yes,
    })
}

/// Adjoint with respect to the trace inner product: the conjugate
/// transpose of the map matrix.
pub fn adjoint_super(s: &Superoperator) -> Superoperator {
    Superoperator {
        in_dim: s.out_dim,
        out_dim: s.in_dim,
        matrix: s.matrix.adjoint(),
        tp: Tristate::Unchecked,
        cp: s.cp,
    }
}

impl Superoperator {
    pub fn adjoint(&self) -> Superoperator {
        adjoint_super(self)
    }
}

/// `Σ_ij S(Π_ij) ⊗ Π_ij`, output factor first.
#[derive(Clone, Debug)]
pub struct ChoiMatrix {
    in_dim: usize,
    out_dim: usize,
    matrix: ComplexMatrix,
}

impl ChoiMatrix {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn min_eigenvalue(&self) -> f64 {
        herm_eig(&self.matrix.hermitian_part())
            .expect("Hermitian part is Hermitian")
            .min_eigenvalue()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.matrix.is_hermitian(tol)
    }

    /// Trace over the output factor; equals `I` for trace-preserving maps.
    pub fn output_partial_trace(&self) -> ComplexMatrix {
        crate::linalg::partial_trace(&self.matrix, &[self.out_dim, self.in_dim], 1)
            .expect("Choi dimensions are consistent")
    }

    pub fn is_cp(&self) -> bool {
        self.min_eigenvalue() >= -CP_TOL
    }

    pub fn is_tp(&self) -> bool {
        (&self.output_partial_trace() - &ComplexMatrix::identity(self.in_dim)).max_abs() <= TP_TOL
    }
}

pub fn choi_of(s: &Superoperator) -> ChoiMatrix {
    let (di, dout) = (s.in_dim, s.out_dim);
    let n = di * dout;
    // Choi[(a,i),(b,j)] = S(Π_ij)[a,b]
    let matrix = ComplexMatrix::from_fn(n, n, |r, c| {
        let (a, i) = (r / di, r % di);
        let (b, j) = (c / di, c % di);
        s.matrix[(a * dout + b, i * di + j)]
    });
    ChoiMatrix {
        in_dim: di,
        out_dim: dout,
        matrix,
    }
}
