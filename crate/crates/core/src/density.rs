use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QstError, Result};
use crate::linalg::{self, CMatrix, CVector};

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-10;

/// A Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
    nominal_rank: Option<usize>,
}

impl DensityMatrix {
    /// Validates hermiticity, positivity and normalization.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_tolerances(matrix, HERMITICITY_TOL, PSD_TOL, TRACE_TOL)
    }

    pub fn with_tolerances(matrix: CMatrix, herm_tol: f64, psd_tol: f64, trace_tol: f64) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        if rows != cols {
            return Err(QstError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(QstError::InvalidDensityMatrix("empty matrix".into()));
        }
        let herm = linalg::hermiticity_error(&matrix);
        if herm > herm_tol {
            return Err(QstError::InvalidDensityMatrix(format!(
                "not Hermitian (||rho - rho^dag||_F = {herm:e})"
            )));
        }
        let tr = linalg::trace(&matrix);
        if (tr.re - 1.0).abs() > trace_tol || tr.im.abs() > trace_tol {
            return Err(QstError::InvalidDensityMatrix(format!("trace {tr} != 1")));
        }
        let min_eig = linalg::eigvalsh(&matrix)[0];
        if min_eig < -psd_tol {
            return Err(QstError::InvalidDensityMatrix(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self {
            matrix,
            nominal_rank: None,
        })
    }

    /// Caller guarantees the invariants (used by operations that preserve them).
    pub(crate) fn from_trusted(matrix: CMatrix, nominal_rank: Option<usize>) -> Self {
        Self { matrix, nominal_rank }
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if psi.is_empty() || norm == 0.0 {
            return Err(QstError::InvalidDensityMatrix("zero state vector".into()));
        }
        let v = psi.unscale(norm);
        Ok(Self::from_trusted(linalg::outer(&v), Some(1)))
    }

    /// `I_d / d`.
    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(QstError::InvalidDensityMatrix("dimension 0".into()));
        }
        let m = CMatrix::identity(dim, dim).unscale(dim as f64);
        Ok(Self::from_trusted(m, Some(dim)))
    }

    /// Projector onto the `k`-th basis vector.
    pub fn basis_state(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(QstError::InvalidArgument(format!("basis index {k} >= {dim}")));
        }
        let mut m = CMatrix::zeros(dim, dim);
        m[(k, k)] = linalg::ONE;
        Ok(Self::from_trusted(m, Some(1)))
    }

    pub fn with_nominal_rank(mut self, rank: Option<usize>) -> Self {
        self.nominal_rank = rank;
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn nominal_rank(&self) -> Option<usize> {
        self.nominal_rank
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.matrix)
    }

    pub fn trace(&self) -> Complex64 {
        linalg::trace(&self.matrix)
    }

    /// Tensor product `self (x) other`.
    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        Self::from_trusted(linalg::kron(&self.matrix, &other.matrix), None)
    }

    /// Serializable split into real and imaginary parts.
    pub fn to_parts(&self) -> ComplexMatrixParts {
        ComplexMatrixParts::from(&self.matrix)
    }
}

/// A complex matrix as nested row-major real/imaginary arrays.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComplexMatrixParts {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&CMatrix> for ComplexMatrixParts {
    fn from(m: &CMatrix) -> Self {
        let rows = |f: fn(&Complex64) -> f64| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
                .collect()
        };
        Self {
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }
}

impl ComplexMatrixParts {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let rows = self.re.len();
        let cols = self.re.first().map_or(0, Vec::len);
        if self.im.len() != rows
            || self.re.iter().chain(self.im.iter()).any(|r| r.len() != cols)
        {
            return Err(QstError::InvalidArgument("ragged matrix parts".into()));
        }
        Ok(DMatrix::from_fn(rows, cols, |i, j| {
            Complex64::new(self.re[i][j], self.im[i][j])
        }))
    }
}
