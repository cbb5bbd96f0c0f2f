use num_complex::Complex64;
use proptest::prelude::*;

use qst_core::ensembles::{depolarize, sample_density_matrix, sample_haar_unitary, EnsembleSpec};
use qst_core::fock::{self, Occupation};
use qst_core::linalg::{self, CMatrix};
use qst_core::measurement::{self, DetectorMode};
use qst_core::metrics;
use qst_core::optical;
use qst_core::recovery::{project_simplex, project_spectrahedron};

fn complex_matrix(n: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
        .prop_map(move |v| CMatrix::from_iterator(n, n, v.into_iter().map(|(re, im)| Complex64::new(re, im))))
}

fn permutations_permanent(a: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut total = Complex64::new(0.0, 0.0);
    // Heap's algorithm
    let mut c = vec![0; n];
    total += (0..n).map(|i| a[(i, idx[i])]).product::<Complex64>();
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                idx.swap(0, i);
            } else {
                idx.swap(c[i], i);
            }
            total += (0..n).map(|r| a[(r, idx[r])]).product::<Complex64>();
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    total
}

fn state(dim: usize, rank: usize, seed: u64) -> qst_core::DensityMatrix {
    sample_density_matrix(&EnsembleSpec { dim, rank: rank.min(dim), depolarization: 0.0, seed }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fock_index_round_trip(n in 1usize..5, m in 1usize..7) {
        let basis = fock::enumerate_basis(n, m).unwrap();
        prop_assert_eq!(basis.dim(), fock::binomial(m + n - 1, n));
        for (k, occ) in basis.states().iter().enumerate() {
            prop_assert_eq!(occ.photons(), n);
            prop_assert_eq!(fock::index_of(&basis, occ).unwrap(), k);
        }
        let clicks = fock::click_subset(&basis);
        prop_assert_eq!(clicks.len(), fock::binomial(m, n));
    }

    #[test]
    fn original_subspace_is_the_vacuum_ancilla_block(n in 1usize..4, m in 1usize..4, extra in 0usize..4) {
        let basis = fock::enumerate_basis(n, m + extra).unwrap();
        let idx = fock::original_subspace_indices(&basis, m).unwrap();
        prop_assert_eq!(idx.len(), fock::fock_dimension(n, m));
        for &i in &idx {
            prop_assert!(basis.state(i).counts()[m..].iter().all(|&c| c == 0));
        }
    }

    #[test]
    fn ryser_matches_permutation_sum(a in (1usize..7).prop_flat_map(complex_matrix)) {
        let exact = permutations_permanent(&a);
        let got = optical::permanent(&a).unwrap();
        prop_assert!((got - exact).norm() <= 1e-11 * (1.0 + exact.norm()));
    }

    #[test]
    fn lift_is_a_unitary_homomorphism(seed in any::<u64>(), ports in 2usize..6, photons in 1usize..4) {
        let u = sample_haar_unitary(ports, seed);
        let v = sample_haar_unitary(ports, seed.wrapping_add(1));
        let lu = optical::lift_unitary(&u, photons).unwrap();
        let lv = optical::lift_unitary(&v, photons).unwrap();
        let luv = optical::lift_unitary(&u.compose(&v).unwrap(), photons).unwrap();
        let eye = CMatrix::identity(lu.dim(), lu.dim());
        prop_assert!((lu.matrix().adjoint() * lu.matrix() - eye).norm() <= 1e-9);
        prop_assert!((luv.matrix() - lu.matrix() * lv.matrix()).norm() <= 1e-8);
    }

    #[test]
    fn simplex_projection_kkt(v in prop::collection::vec(-3.0f64..3.0, 1..12)) {
        let p = project_simplex(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        // v - p is constant on the support and no larger off it
        let shifts: Vec<f64> = v.iter().zip(&p).filter(|(_, &pi)| pi > 0.0).map(|(vi, pi)| vi - pi).collect();
        let theta = shifts[0];
        prop_assert!(shifts.iter().all(|s| (s - theta).abs() < 1e-12));
        prop_assert!(v.iter().zip(&p).filter(|(_, &pi)| pi == 0.0).all(|(vi, _)| *vi <= theta + 1e-12));
    }

    #[test]
    fn spectrahedron_projection_is_nearest(h in complex_matrix(4), seed in any::<u64>(), rank in 1usize..5) {
        let p = project_spectrahedron(&h).unwrap();
        let pm = p.matrix();
        prop_assert!(linalg::hermiticity_error(pm) < 1e-12);
        prop_assert!((linalg::trace(pm).re - 1.0).abs() < 1e-12);
        prop_assert!(linalg::eigvalsh(pm)[0] >= -1e-12);
        // variational inequality against any feasible point
        let x = state(4, rank, seed);
        let hh = linalg::hermitian_part(&h);
        prop_assert!(linalg::real_inner(&(&hh - pm), &(x.matrix() - pm)) <= 1e-10);
        let again = project_spectrahedron(pm).unwrap();
        prop_assert!((again.matrix() - pm).norm() < 1e-10);
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded(a in any::<u64>(), b in any::<u64>(), ra in 1usize..6, rb in 1usize..6) {
        let rho = state(5, ra, a);
        let sigma = state(5, rb, b);
        let f = metrics::fidelity(&rho, &sigma).unwrap();
        let g = metrics::fidelity(&sigma, &rho).unwrap();
        prop_assert!((f - g).abs() < 1e-9);
        prop_assert!((-1e-12..=1.0 + 1e-9).contains(&f));
        let t = metrics::trace_distance(&rho, &sigma).unwrap();
        prop_assert!(1.0 - f <= t + 1e-9);
        prop_assert!(t <= (1.0 - f * f).max(0.0).sqrt() + 1e-9);
    }

    #[test]
    fn purity_and_entropy_ranges(seed in any::<u64>(), rank in 1usize..7, mu in 0.0f64..1.0) {
        let rho = depolarize(&state(6, rank, seed), mu).unwrap();
        let p = metrics::purity(&rho);
        let s = metrics::von_neumann_entropy(&rho);
        prop_assert!((1.0 / 6.0 - 1e-12..=1.0 + 1e-12).contains(&p));
        prop_assert!((-1e-12..=6f64.ln() + 1e-12).contains(&s));
    }

    #[test]
    fn measurement_paths_agree(seed in any::<u64>(), rank in 1usize..5) {
        let u = sample_haar_unitary(5, seed);
        let rho = state(6, rank, seed ^ 0xABCD);
        let fock_path = measurement::simulate_measurements(&rho, &u, 3, 2).unwrap().values;
        let povm_path = measurement::povm_elements(&u, 3, 2).unwrap().probabilities(&rho);
        let a = measurement::build_measurement_matrix(&u, 3, 2, DetectorMode::Full).unwrap();
        let matrix_path = measurement::measure(&a, &rho).unwrap().values;
        prop_assert!((fock_path.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for ((x, y), z) in fock_path.iter().zip(&povm_path).zip(&matrix_path) {
            prop_assert!((x - y).abs() < 1e-10 && (x - z).abs() < 1e-10);
        }
        let click = measurement::build_measurement_matrix(&u, 3, 2, DetectorMode::Click).unwrap();
        let clicks = measurement::measure(&click, &rho).unwrap().values;
        prop_assert!(clicks.iter().sum::<f64>() <= 1.0 + 1e-10);
    }

    #[test]
    fn noise_is_clamped_and_recorded(seed in any::<u64>(), snr in -10.0f64..40.0) {
        let u = sample_haar_unitary(4, seed);
        let a = measurement::build_measurement_matrix(&u, 2, 2, DetectorMode::Full).unwrap();
        let y = measurement::measure(&a, &state(3, 1, seed)).unwrap();
        let noisy = measurement::add_noise(&y, snr, seed).unwrap();
        prop_assert!(noisy.values.iter().all(|&v| v >= 0.0));
        prop_assert_eq!(noisy.snr_db, Some(snr));
        prop_assert!(noisy.noise_power.unwrap() > 0.0);
    }

    #[test]
    fn occupation_factorials(counts in prop::collection::vec(0u32..5, 1..6)) {
        let occ = Occupation::new(counts.clone());
        let expected: f64 = counts.iter().map(|&c| (1..=c).product::<u32>() as f64).product();
        prop_assert_eq!(occ.factorial_product(), expected);
        prop_assert_eq!(occ.mode_list().len(), occ.photons());
    }
}
