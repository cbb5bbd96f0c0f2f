//! Scores for comparing and characterizing density matrices.

use crate::density::DensityMatrix;
use crate::error::{QstError, Result};
use crate::linalg;

/// Eigenvalues below this are rejected as genuinely negative.
const NEGATIVE_EIG_TOL: f64 = 1e-7;

fn check_dims(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(QstError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

/// Root fidelity `Tr sqrt(sqrt(rho) sigma sqrt(rho))` (not squared).
///
/// Evaluated as the trace norm `||sqrt(rho) sqrt(sigma)||_1`, which equals the
/// expression above and stays accurate when either state is rank deficient.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dims(rho, sigma)?;
    let sqrt_rho = psd_sqrt(rho)?;
    let sqrt_sigma = psd_sqrt(sigma)?;
    let product = sqrt_rho * sqrt_sigma;
    Ok(product.singular_values().iter().sum())
}

fn psd_sqrt(rho: &DensityMatrix) -> Result<linalg::CMatrix> {
    let (vals, vecs) = linalg::eigh(rho.matrix());
    if vals[0] < -NEGATIVE_EIG_TOL {
        return Err(QstError::InvalidDensityMatrix(format!("negative eigenvalue {:e}", vals[0])));
    }
    let roots: Vec<f64> = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    Ok(linalg::from_spectrum(&roots, &vecs))
}

/// `Tr(rho^2)`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `-Tr(rho ln rho)` in nats, with `0 ln 0 = 0`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    rho.eigenvalues()
        .into_iter()
        .filter(|&l| l > 1e-12)
        .map(|l| -l * l.ln())
        .sum()
}

/// Count of eigenvalues above `threshold` times the largest one.
pub fn numerical_rank(rho: &DensityMatrix, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(QstError::InvalidArgument(format!(
            "rank threshold {threshold} outside (0, 1)"
        )));
    }
    let vals = rho.eigenvalues();
    let largest = vals.last().copied().unwrap_or(0.0);
    Ok(vals.iter().filter(|&&l| l > threshold * largest).count())
}

/// `||rho - sigma||_1 / 2`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dims(rho, sigma)?;
    let diff = rho.matrix() - sigma.matrix();
    Ok(linalg::eigvalsh(&diff).iter().map(|l| l.abs()).sum::<f64>() / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{self, depolarize, sample_density_matrix, EnsembleSpec};
    use crate::linalg::{CMatrix, CVector};
    use num_complex::Complex64;

    fn random_vector(d: usize, seed: u64) -> CVector {
        let u = ensembles::sample_haar_unitary(d, seed);
        u.matrix().column(0).into_owned()
    }

    #[test]
    fn self_fidelity_is_one() {
        for (seed, r) in [(1, 1), (2, 3), (3, 6)] {
            let rho = sample_density_matrix(&EnsembleSpec { dim: 6, rank: r, depolarization: 0.0, seed }).unwrap();
            assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn orthogonal_pure_states() {
        let a = DensityMatrix::basis_state(4, 0).unwrap();
        let b = DensityMatrix::basis_state(4, 2).unwrap();
        assert!(fidelity(&a, &b).unwrap().abs() < 1e-10);
    }

    #[test]
    fn pure_pair_fidelity_is_overlap() {
        for seed in 0..10 {
            let psi = random_vector(5, seed);
            let phi = random_vector(5, 100 + seed);
            let f = fidelity(&DensityMatrix::pure(&psi).unwrap(), &DensityMatrix::pure(&phi).unwrap()).unwrap();
            let overlap = psi.dotc(&phi).norm();
            assert!((f - overlap).abs() < 1e-7, "{f} vs {overlap}");
        }
    }

    #[test]
    fn fidelity_symmetric_and_bounded() {
        for seed in 0..10 {
            let a = sample_density_matrix(&EnsembleSpec { dim: 5, rank: 1 + seed as usize % 5, depolarization: 0.0, seed }).unwrap();
            let b = sample_density_matrix(&EnsembleSpec { dim: 5, rank: 2, depolarization: 0.1, seed: seed + 50 }).unwrap();
            let (fab, fba) = (fidelity(&a, &b).unwrap(), fidelity(&b, &a).unwrap());
            assert!((fab - fba).abs() < 1e-9);
            assert!((0.0..=1.0 + 1e-9).contains(&fab));
            // Fuchs-van de Graaf
            let t = trace_distance(&a, &b).unwrap();
            assert!(1.0 - fab <= t + 1e-9 && t <= (1.0 - fab * fab).sqrt() + 1e-9);
        }
        let small = DensityMatrix::maximally_mixed(2).unwrap();
        assert!(fidelity(&small, &DensityMatrix::maximally_mixed(3).unwrap()).is_err());
    }

    #[test]
    fn purity_and_entropy_values() {
        let pure = DensityMatrix::pure(&random_vector(6, 1)).unwrap();
        let mixed = DensityMatrix::maximally_mixed(6).unwrap();
        assert!((purity(&pure) - 1.0).abs() < 1e-12);
        assert!((purity(&mixed) - 1.0 / 6.0).abs() < 1e-14);
        assert!(von_neumann_entropy(&pure).abs() < 1e-9);
        assert!((von_neumann_entropy(&mixed) - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_additive_on_products() {
        let a = sample_density_matrix(&EnsembleSpec { dim: 3, rank: 2, depolarization: 0.0, seed: 4 }).unwrap();
        let b = sample_density_matrix(&EnsembleSpec { dim: 4, rank: 3, depolarization: 0.1, seed: 5 }).unwrap();
        let s = von_neumann_entropy(&a.tensor(&b));
        assert!((s - von_neumann_entropy(&a) - von_neumann_entropy(&b)).abs() < 1e-9);
    }

    #[test]
    fn entropy_grows_with_depolarization() {
        for seed in 0..5 {
            let rho = sample_density_matrix(&EnsembleSpec { dim: 6, rank: 2, depolarization: 0.0, seed }).unwrap();
            let mut last = von_neumann_entropy(&rho);
            for k in 1..=10 {
                let s = von_neumann_entropy(&depolarize(&rho, k as f64 / 10.0).unwrap());
                assert!(s >= last - 1e-12);
                last = s;
            }
        }
    }

    #[test]
    fn numerical_rank_cases() {
        let pure = DensityMatrix::pure(&random_vector(5, 3)).unwrap();
        assert_eq!(numerical_rank(&pure, 1e-3).unwrap(), 1);
        assert_eq!(numerical_rank(&DensityMatrix::maximally_mixed(7).unwrap(), 1e-3).unwrap(), 7);
        // eigenvalues (1-mu) lambda_i + mu/d: the two signal eigenvalues stay
        // above 5% of the largest as long as lambda_min is not tiny
        let mut hits = 0;
        for seed in 0..20 {
            let spec = EnsembleSpec { dim: 10, rank: 2, depolarization: 0.0, seed };
            let rho = sample_density_matrix(&spec).unwrap();
            let vals = rho.eigenvalues();
            let (l1, l2) = (vals[9], vals[8]);
            let dep = depolarize(&rho, 0.02).unwrap();
            let expect = if (0.98 * l2 + 0.002) > 0.05 * (0.98 * l1 + 0.002) { 2 } else { 1 };
            assert_eq!(numerical_rank(&dep, 0.05).unwrap(), expect);
            hits += usize::from(expect == 2);
        }
        assert!(hits > 10);
        assert!(numerical_rank(&pure, 1.5).is_err());
    }

    #[test]
    fn fidelity_one_iff_close() {
        let rho = sample_density_matrix(&EnsembleSpec { dim: 4, rank: 2, depolarization: 0.05, seed: 9 }).unwrap();
        let bump = CMatrix::from_fn(4, 4, |i, j| if i == j { Complex64::new(if i == 0 { 1e-9 } else { -1e-9 / 3.0 }, 0.0) } else { Complex64::new(0.0, 0.0) });
        let near = DensityMatrix::new(rho.matrix() + bump).unwrap();
        assert!(trace_distance(&rho, &near).unwrap() <= 1e-6);
        assert!((fidelity(&rho, &near).unwrap() - 1.0).abs() < 1e-6);
        let far = sample_density_matrix(&EnsembleSpec { dim: 4, rank: 2, depolarization: 0.05, seed: 10 }).unwrap();
        assert!(trace_distance(&rho, &far).unwrap() > 1e-6);
        assert!(fidelity(&rho, &far).unwrap() < 1.0 - 1e-6);
    }
}
