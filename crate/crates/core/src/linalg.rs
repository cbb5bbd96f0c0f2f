//! Small dense helpers shared by the modules; everything is complex double precision.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `(A + A^dag) / 2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Frobenius norm of `A - A^dag`.
pub fn hermiticity_error(a: &CMatrix) -> f64 {
    (a - a.adjoint()).norm()
}

/// `||U^dag U - I||_F`.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let n = u.ncols();
    (u.adjoint() * u - CMatrix::identity(n, n)).norm()
}

/// Eigen-decomposition of the Hermitian part of `a`, eigenvalues ascending.
pub fn eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn eigvalsh(a: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(hermitian_part(a))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `V diag(values) V^dag`.
pub fn from_spectrum(values: &[f64], vectors: &CMatrix) -> CMatrix {
    let n = vectors.nrows();
    let mut scaled = vectors.clone();
    for (c, &v) in values.iter().enumerate() {
        scaled.column_mut(c).scale_mut(v);
    }
    let out = scaled * vectors.adjoint();
    debug_assert_eq!(out.nrows(), n);
    out
}

/// Apply `f` to the eigenvalues of a Hermitian matrix.
pub fn spectral_map(a: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, vectors) = eigh(a);
    let mapped: Vec<f64> = values.into_iter().map(f).collect();
    from_spectrum(&mapped, &vectors)
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().sum()
}

/// Frobenius inner product `Re Tr(A^dag B)`.
pub fn real_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// `|psi><psi|`.
pub fn outer(psi: &CVector) -> CMatrix {
    psi * psi.adjoint()
}

/// Number of singular values above `rel_tol` times the largest.
pub fn numerical_rank_real(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let largest = sv.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * largest).count()
}

/// Real coordinates of a Hermitian matrix in an orthonormal basis of the
/// Hermitian space: diagonal entries, then `sqrt(2) Re` and `sqrt(2) Im` of the
/// strict upper triangle. The map is an isometry for the Frobenius norm.
pub fn hermitian_coordinates(a: &CMatrix) -> Vec<f64> {
    let d = a.nrows();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        out.push(a[(i, i)].re);
    }
    let s = std::f64::consts::SQRT_2;
    for i in 0..d {
        for j in (i + 1)..d {
            out.push(s * a[(i, j)].re);
            out.push(s * a[(i, j)].im);
        }
    }
    out
}

/// Kronecker product.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |r, c| a[(r / br, c / bc)] * b[(r % br, c % bc)])
}
