//! Random couplers and random mixed states.
//!
//! Each sampler either takes a seed (and owns a ChaCha stream built from it) or
//! borrows a caller-supplied RNG.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{QstError, Result};
use crate::linalg::{self, CMatrix};
use crate::optical::PortUnitary;

pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Haar-distributed `M x M` unitary from a seed.
pub fn sample_haar_unitary(ports: usize, seed: u64) -> PortUnitary {
    haar_unitary(&mut rng_from_seed(seed), ports)
}

/// QR of a complex Ginibre matrix, with the phases of `diag(R)` moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> PortUnitary {
    assert!(dim >= 1, "unitary dimension must be positive");
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let g = CMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            linalg::ONE
        };
        q.column_mut(j).iter_mut().for_each(|z| *z *= phase);
    }
    PortUnitary::new(q).expect("QR factor is unitary")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub dim: usize,
    pub rank: usize,
    /// Depolarization fraction `mu` in `[0, 1]`.
    pub depolarization: f64,
    pub seed: u64,
}

/// Uniform point on the `(r-1)`-simplex: normalized standard exponentials.
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, r: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..r).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Rank-`r` state with uniform simplex spectrum and Haar eigenvectors, then
/// depolarized by `spec.depolarization`.
pub fn sample_density_matrix(spec: &EnsembleSpec) -> Result<DensityMatrix> {
    sample_density_matrix_with(&mut rng_from_seed(spec.seed), spec)
}

pub fn sample_density_matrix_with<R: Rng + ?Sized>(rng: &mut R, spec: &EnsembleSpec) -> Result<DensityMatrix> {
    let (d, r) = (spec.dim, spec.rank);
    if r == 0 || r > d {
        return Err(QstError::InvalidArgument(format!(
            "rank {r} outside 1..={d}"
        )));
    }
    let lambda = sample_simplex(rng, r);
    let v = haar_unitary(rng, d);
    let mut m = CMatrix::zeros(d, d);
    for (k, &l) in lambda.iter().enumerate() {
        let col = v.matrix().column(k);
        m += (col * col.adjoint()).scale(l);
    }
    let rho = DensityMatrix::from_trusted(linalg::hermitian_part(&m), Some(r));
    if spec.depolarization > 0.0 {
        depolarize(&rho, spec.depolarization)
    } else {
        Ok(rho)
    }
}

/// `(1 - mu) rho + mu I / d`.
pub fn depolarize(rho: &DensityMatrix, mu: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(QstError::InvalidArgument(format!(
            "depolarization {mu} outside [0, 1]"
        )));
    }
    let d = rho.dim();
    let m = rho.matrix().scale(1.0 - mu) + CMatrix::identity(d, d).scale(mu / d as f64);
    Ok(DensityMatrix::from_trusted(m, rho.nominal_rank()))
}

/// `exp(i theta C)` for the uniform nearest-neighbour waveguide array, `C`
/// tridiagonal with zero diagonal and unit couplings.
pub fn evanescent_coupler(ports: usize, theta: f64) -> Result<PortUnitary> {
    if ports < 2 {
        return Err(QstError::InvalidArgument("waveguide array needs >= 2 ports".into()));
    }
    if !theta.is_finite() || theta < 0.0 {
        return Err(QstError::InvalidArgument(format!("theta {theta} must be >= 0")));
    }
    let c = DMatrix::<f64>::from_fn(ports, ports, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 });
    let eig = SymmetricEigen::new(c);
    let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let phases: Vec<Complex64> = eig
        .eigenvalues
        .iter()
        .map(|&l| Complex64::from_polar(1.0, theta * l))
        .collect();
    let mut scaled = v.clone();
    for (k, p) in phases.iter().enumerate() {
        scaled.column_mut(k).iter_mut().for_each(|z| *z *= *p);
    }
    PortUnitary::new(scaled * v.transpose())
}
