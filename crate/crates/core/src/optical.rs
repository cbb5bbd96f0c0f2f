//! Linear-optical evolution lifted from port space to the `N`-photon Fock space.
//!
//! A coupler `U` acts on creation operators column-wise, `a_j^dag -> sum_i U_ij a_i^dag`,
//! so the Fock-space amplitude between input occupation `n` and output occupation
//! `m` is `Per(U[m, n]) / sqrt(prod m_i! prod n_j!)`, where `U[m, n]` repeats row
//! `i` `m_i` times and column `j` `n_j` times. With this convention lifting is a
//! group homomorphism and the one-photon lift is `U` itself.

use num_complex::Complex64;

use crate::density::DensityMatrix;
use crate::error::{QstError, Result};
use crate::fock::{self, FockBasis};
use crate::linalg::{self, CMatrix, ZERO};

pub const PORT_UNITARITY_TOL: f64 = 1e-10;
pub const LIFTED_UNITARITY_TOL: f64 = 1e-9;

/// An `M x M` unitary coupler.
#[derive(Debug, Clone, PartialEq)]
pub struct PortUnitary(CMatrix);

impl PortUnitary {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        if rows != cols || rows == 0 {
            return Err(QstError::NotSquare { rows, cols });
        }
        let deviation = linalg::unitarity_error(&matrix);
        if deviation > PORT_UNITARITY_TOL {
            return Err(QstError::NotUnitary { deviation });
        }
        Ok(Self(matrix))
    }

    pub fn identity(ports: usize) -> Self {
        Self(CMatrix::identity(ports, ports))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    /// `self * other`.
    pub fn compose(&self, other: &PortUnitary) -> Result<PortUnitary> {
        if self.dim() != other.dim() {
            return Err(QstError::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(Self(&self.0 * &other.0))
    }

    /// Block-diagonal `self (+) other`: no coupling between the two port groups.
    pub fn direct_sum(&self, other: &PortUnitary) -> PortUnitary {
        let (a, b) = (self.dim(), other.dim());
        let mut out = CMatrix::zeros(a + b, a + b);
        out.view_mut((0, 0), (a, a)).copy_from(&self.0);
        out.view_mut((a, a), (b, b)).copy_from(&other.0);
        Self(out)
    }
}

/// The `D x D` evolution induced on the Fock space, indexed by the canonical basis.
#[derive(Debug, Clone)]
pub struct LiftedUnitary {
    basis: FockBasis,
    matrix: CMatrix,
}

impl LiftedUnitary {
    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Matrix permanent. Closed forms up to `2 x 2`, Gray-code Ryser beyond.
pub fn permanent(a: &CMatrix) -> Result<Complex64> {
    let (rows, cols) = a.shape();
    if rows != cols || rows == 0 {
        return Err(QstError::NotSquare { rows, cols });
    }
    let idx: Vec<usize> = (0..rows).collect();
    Ok(permanent_indexed(a, &idx, &idx))
}

/// Permanent of the submatrix `a[rows, cols]`, where indices may repeat.
pub(crate) fn permanent_indexed(a: &CMatrix, rows: &[usize], cols: &[usize]) -> Complex64 {
    let n = rows.len();
    debug_assert_eq!(n, cols.len());
    let at = |i: usize, j: usize| a[(rows[i], cols[j])];
    match n {
        0 => Complex64::new(1.0, 0.0),
        1 => at(0, 0),
        2 => at(0, 0) * at(1, 1) + at(0, 1) * at(1, 0),
        _ => ryser(n, at),
    }
}

// per(A) = (-1)^n sum_{S nonempty} (-1)^{|S|} prod_i sum_{j in S} a_ij, with S
// visited in Gray-code order so each step toggles a single column.
fn ryser(n: usize, at: impl Fn(usize, usize) -> Complex64) -> Complex64 {
    let mut row_sums = vec![ZERO; n];
    let mut in_set = vec![false; n];
    let mut total = ZERO;
    let mut size = 0usize;
    for k in 1u64..(1u64 << n) {
        let j = k.trailing_zeros() as usize;
        let sign = if in_set[j] { -1.0 } else { 1.0 };
        in_set[j] = !in_set[j];
        if in_set[j] {
            size += 1;
        } else {
            size -= 1;
        }
        for (i, s) in row_sums.iter_mut().enumerate() {
            *s += at(i, j) * sign;
        }
        let prod = row_sums.iter().fold(Complex64::new(1.0, 0.0), |p, s| p * s);
        if size.is_multiple_of(2) {
            total += prod;
        } else {
            total -= prod;
        }
    }
    if n.is_multiple_of(2) {
        total
    } else {
        -total
    }
}

/// The full `D x D` lifted unitary.
pub fn lift_unitary(u: &PortUnitary, photons: usize) -> Result<LiftedUnitary> {
    let basis = fock::enumerate_basis(photons, u.dim())?;
    let cols: Vec<usize> = (0..basis.dim()).collect();
    let matrix = lifted_columns(u, &basis, &cols);
    Ok(LiftedUnitary { basis, matrix })
}

/// Selected columns (input occupations) of the lifted unitary, all rows.
pub fn lifted_columns(u: &PortUnitary, basis: &FockBasis, cols: &[usize]) -> CMatrix {
    let rows: Vec<usize> = (0..basis.dim()).collect();
    lifted_block(u, basis, &rows, cols)
}

/// The block `U[rows, cols]` of the lifted unitary, computed element by element.
pub fn lifted_block(u: &PortUnitary, basis: &FockBasis, rows: &[usize], cols: &[usize]) -> CMatrix {
    let modes: Vec<Vec<usize>> = basis.states().iter().map(|s| s.mode_list()).collect();
    let norms: Vec<f64> = basis
        .states()
        .iter()
        .map(|s| s.factorial_product().sqrt())
        .collect();
    let a = u.matrix();
    CMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        let (out, inp) = (rows[r], cols[c]);
        permanent_indexed(a, &modes[out], &modes[inp]) / (norms[out] * norms[inp])
    })
}

/// `U rho U^dag`.
pub fn evolve_density(rho: &DensityMatrix, lifted: &LiftedUnitary) -> Result<DensityMatrix> {
    if rho.dim() != lifted.dim() {
        return Err(QstError::DimensionMismatch {
            expected: lifted.dim(),
            actual: rho.dim(),
        });
    }
    let u = lifted.matrix();
    let out = u * rho.matrix() * u.adjoint();
    Ok(DensityMatrix::from_trusted(
        linalg::hermitian_part(&out),
        rho.nominal_rank(),
    ))
}

/// `rho_0 (x) |0><0|` over the `M`-port space: `rho_0` placed on the block of
/// occupations with empty ancilla ports, zero elsewhere.
pub fn embed_with_ancilla(rho0: &DensityMatrix, basis: &FockBasis, m: usize) -> Result<DensityMatrix> {
    let idx = fock::original_subspace_indices(basis, m)?;
    if idx.len() != rho0.dim() {
        return Err(QstError::DimensionMismatch {
            expected: idx.len(),
            actual: rho0.dim(),
        });
    }
    let mut out = CMatrix::zeros(basis.dim(), basis.dim());
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            out[(i, j)] = rho0.matrix()[(a, b)];
        }
    }
    Ok(DensityMatrix::from_trusted(out, rho0.nominal_rank()))
}
