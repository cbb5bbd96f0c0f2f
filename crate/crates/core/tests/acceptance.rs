//! End-to-end acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line
//! before asserting.

use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;

use qst_core::ensembles::{sample_density_matrix, sample_haar_unitary, EnsembleSpec};
use qst_core::experiment::{self, CouplerFamily, ExperimentSpec, RankAnalysisSpec};
use qst_core::fock::{self, Occupation};
use qst_core::linalg::CMatrix;
use qst_core::measurement::{self, DetectorMode, MeasurementMatrix};
use qst_core::optical::{self, PortUnitary};

/// Criteria run one at a time so each wall-clock budget measures only its own work.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: String, elapsed: Duration, budget: Duration) {
    let ok = pass && elapsed <= budget;
    // written past the harness capture so the verdict shows in plain `cargo test` output
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "[{}] criterion {id}: {name}: {detail} ({:.1}s, budget {}s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    assert!(pass, "criterion {id} failed: {detail}");
    assert!(elapsed <= budget, "criterion {id} exceeded its runtime budget");
}

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

/// Counts occupations of `n` photons in `m` ports by walking all `(n+1)^m` digit strings.
fn brute_force_counts(n: usize, m: usize) -> (usize, usize) {
    let (mut all, mut clicks) = (0, 0);
    let total = (n + 1).pow(m as u32);
    for mut code in 0..total {
        let mut digits = Vec::with_capacity(m);
        for _ in 0..m {
            digits.push(code % (n + 1));
            code /= n + 1;
        }
        if digits.iter().sum::<usize>() == n {
            all += 1;
            if digits.iter().all(|&x| x <= 1) {
                clicks += 1;
            }
        }
    }
    (all, clicks)
}

#[test]
fn criterion_01_dimension_bookkeeping() {
    let _guard = serial();
    let t = Instant::now();
    let d20 = fock::enumerate_basis(3, 4).unwrap().dim();
    let d84 = fock::enumerate_basis(3, 7).unwrap().dim();
    let big = fock::enumerate_basis(3, 16).unwrap();
    let fractions: Vec<f64> = [7, 9, 11]
        .iter()
        .map(|&m| fock::enumerate_basis(3, m).unwrap().dim() as f64 / (d20 * d20) as f64)
        .collect();
    let clicks = fock::click_subset(&fock::enumerate_basis(3, 11).unwrap()).len();
    let oracle = [brute_force_counts(3, 4), brute_force_counts(3, 7), brute_force_counts(3, 11)];
    let expected = [0.21, 0.4125, 0.715];
    let pass = d20 == 20
        && d84 == 84
        && big.dim() == 816
        && fractions.iter().zip(expected).all(|(f, e)| (f - e).abs() < 1e-15)
        && clicks == 165
        && (clicks as f64 / 400.0 - 0.4125).abs() < 1e-15
        && oracle[0].0 == 20
        && oracle[1].0 == 84
        && oracle[2].1 == 165;
    report(
        1,
        "dimension bookkeeping",
        pass,
        format!("d={d20},{d84} D={} fractions={fractions:?} clicks={clicks}", big.dim()),
        t.elapsed(),
        Duration::from_secs(1),
    );
}

/// Permanent as the sum over all permutations.
fn permanent_by_permutations(a: &CMatrix) -> Complex64 {
    fn rec(a: &CMatrix, row: usize, used: &mut Vec<bool>, acc: Complex64, total: &mut Complex64) {
        let n = a.nrows();
        if row == n {
            *total += acc;
            return;
        }
        for c in 0..n {
            if !used[c] {
                used[c] = true;
                rec(a, row + 1, used, acc * a[(row, c)], total);
                used[c] = false;
            }
        }
    }
    let mut total = Complex64::new(0.0, 0.0);
    rec(a, 0, &mut vec![false; a.nrows()], Complex64::new(1.0, 0.0), &mut total);
    total
}

#[test]
fn criterion_02_lifting_correctness() {
    let _guard = serial();
    let t = Instant::now();
    let mut unitarity: f64 = 0.0;
    let mut homomorphism: f64 = 0.0;
    let mut single: f64 = 0.0;
    for s in 0..50u64 {
        let ports = 4 + (s % 5) as usize;
        let photons = 2 + (s % 2) as usize;
        let u = sample_haar_unitary(ports, 100 + s);
        let v = sample_haar_unitary(ports, 500 + s);
        let lu = optical::lift_unitary(&u, photons).unwrap();
        let lv = optical::lift_unitary(&v, photons).unwrap();
        let luv = optical::lift_unitary(&u.compose(&v).unwrap(), photons).unwrap();
        let eye = CMatrix::identity(lu.dim(), lu.dim());
        unitarity = unitarity.max((lu.matrix().adjoint() * lu.matrix() - eye).norm());
        homomorphism = homomorphism.max((luv.matrix() - lu.matrix() * lv.matrix()).norm());
        // one photon in port j lands in port i with amplitude U_ij
        let l1 = optical::lift_unitary(&u, 1).unwrap();
        for j in 0..ports {
            let mut occ = vec![0; ports];
            occ[j] = 1;
            let jj = fock::index_of(l1.basis(), &Occupation::new(occ)).unwrap();
            for i in 0..ports {
                let mut occ = vec![0; ports];
                occ[i] = 1;
                let ii = fock::index_of(l1.basis(), &Occupation::new(occ)).unwrap();
                single = single.max((l1.matrix()[(ii, jj)] - u.matrix()[(i, j)]).norm());
            }
        }
    }

    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bs = PortUnitary::new(CMatrix::from_row_slice(2, 2, &[h, h, h, -h].map(|x| Complex64::new(x, 0.0)))).unwrap();
    let lifted = optical::lift_unitary(&bs, 2).unwrap();
    let one_one = fock::index_of(lifted.basis(), &Occupation::new(vec![1, 1])).unwrap();
    let hom = lifted.matrix()[(one_one, one_one)].norm();

    let mut perm_err: f64 = 0.0;
    for n in 1..=5 {
        for s in 0..10u64 {
            let a = sample_haar_unitary(n + 2, 1000 * n as u64 + s).matrix().view((0, 0), (n, n)).into_owned();
            let exact = permanent_by_permutations(&a);
            let got = optical::permanent(&a).unwrap();
            perm_err = perm_err.max((got - exact).norm() / exact.norm().max(1e-300));
        }
    }

    let pass = unitarity <= 1e-9 && homomorphism <= 1e-8 && single <= 1e-12 && hom <= 1e-12 && perm_err <= 1e-12;
    report(
        2,
        "lifting correctness",
        pass,
        format!(
            "unitarity={unitarity:.1e} homomorphism={homomorphism:.1e} one-photon={single:.1e} HOM={hom:.1e} permanent={perm_err:.1e}"
        ),
        t.elapsed(),
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_03_measurement_consistency() {
    let _guard = serial();
    let t = Instant::now();
    let mut pairwise: f64 = 0.0;
    let mut resolution: f64 = 0.0;
    for s in 0..20u64 {
        let u = sample_haar_unitary(7, 40 + s);
        let rho = sample_density_matrix(&EnsembleSpec { dim: 10, rank: 1 + (s % 4) as usize, depolarization: 0.0, seed: s }).unwrap();
        let fock_path = measurement::simulate_measurements(&rho, &u, 3, 3).unwrap().values;
        let povm = measurement::povm_elements(&u, 3, 3).unwrap();
        let povm_path = povm.probabilities(&rho);
        let a = measurement::build_measurement_matrix(&u, 3, 3, DetectorMode::Full).unwrap();
        let matrix_path = measurement::measure(&a, &rho).unwrap().values;
        let dense_path: Vec<f64> = (a.dense() * MeasurementMatrix::vectorize(rho.matrix())).iter().map(|z| z.re).collect();
        for (p, q) in [(&fock_path, &povm_path), (&fock_path, &matrix_path), (&povm_path, &matrix_path), (&matrix_path, &dense_path)] {
            let worst = p.iter().zip(q.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            pairwise = pairwise.max(worst);
        }
        resolution = resolution.max(povm.resolution_error());
    }
    let pass = pairwise <= 1e-10 && resolution <= 1e-9;
    report(
        3,
        "measurement consistency",
        pass,
        format!("max pairwise={pairwise:.1e} identity resolution={resolution:.1e}"),
        t.elapsed(),
        minutes(1),
    );
}

/// Numerical rank of the complex measurement matrix acting on Hermitian inputs,
/// from the SVD of its real and imaginary parts stacked over a real basis of
/// Hermitian matrices.
fn hermitian_rank(a: &MeasurementMatrix, rel_tol: f64) -> usize {
    let d = a.dim();
    let mut cols = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in i..d {
            let mut h = CMatrix::zeros(d, d);
            if i == j {
                h[(i, i)] = Complex64::new(1.0, 0.0);
                cols.push(a.apply(&h));
            } else {
                h[(i, j)] = Complex64::new(1.0, 0.0);
                h[(j, i)] = Complex64::new(1.0, 0.0);
                cols.push(a.apply(&h));
                h[(i, j)] = Complex64::new(0.0, 1.0);
                h[(j, i)] = Complex64::new(0.0, -1.0);
                cols.push(a.apply(&h));
            }
        }
    }
    let m = DMatrix::from_fn(a.rows(), cols.len(), |r, c| cols[c][r]);
    let sv = m.singular_values();
    let top = sv.max();
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

#[test]
fn criterion_04_measurement_matrix_rank() {
    let _guard = serial();
    let t = Instant::now();
    let spec = RankAnalysisSpec { couplers: 20, ..RankAnalysisSpec::default() };
    let rows = experiment::run_rank_analysis(&spec).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for r in &rows {
        match r.coupler {
            CouplerFamily::Haar => {
                pass &= r.mean_rank == r.full_rank as f64;
                detail.push(format!("M={} D={} rank={}", r.ports, r.rows, r.mean_rank));
            }
            _ => {
                pass &= r.max_rank <= 20;
                detail.push(format!("M={} block<={}", r.ports, r.max_rank));
            }
        }
    }
    // independent rank computation on one coupler per port count
    for &ports in &spec.ports {
        let u = sample_haar_unitary(ports, 77);
        let a = measurement::build_measurement_matrix(&u, 4, 3, DetectorMode::Full).unwrap();
        let rank = hermitian_rank(&a, experiment::RANK_TOL);
        pass &= rank == a.rows().min(400);
    }
    report(4, "measurement-matrix rank", pass, detail.join(", "), t.elapsed(), minutes(5));
}

fn sweep_line(res: &experiment::SweepResult) -> String {
    res.by_rank
        .iter()
        .map(|(r, s)| format!("rank {r}: mean={:.4} n={} fail={}", s.mean, s.count, s.failures))
        .collect::<Vec<_>>()
        .join(", ")
}

#[test]
fn criterion_05_noiseless_low_rank_recovery() {
    let _guard = serial();
    let t = Instant::now();
    let spec = ExperimentSpec { scenario: "acceptance_noiseless".into(), trials: 10, couplers: 5, ..ExperimentSpec::preset("noiseless").unwrap() };
    let res = experiment::run_fidelity_sweep(&spec).unwrap();
    let pass = [1, 2].iter().all(|r| res.by_rank[r].mean >= 0.95 && res.by_rank[r].count == 50);
    report(5, "noiseless low-rank recovery (d=10, M=7)", pass, sweep_line(&res), t.elapsed(), minutes(10));
}

#[test]
fn criterion_06_noisy_recovery() {
    let _guard = serial();
    let t = Instant::now();
    let spec = ExperimentSpec { scenario: "acceptance_noisy".into(), trials: 10, couplers: 5, ..ExperimentSpec::preset("noisy").unwrap() };
    assert_eq!((spec.depolarization, spec.snr_db), (0.02, Some(25.0)));
    let res = experiment::run_fidelity_sweep(&spec).unwrap();
    let pass = [1, 2].iter().all(|r| res.by_rank[r].mean >= 0.90);
    report(6, "noisy recovery (mu=0.02, 25 dB)", pass, sweep_line(&res), t.elapsed(), minutes(10));
}

#[test]
fn criterion_07_click_detector_recovery() {
    let _guard = serial();
    let t = Instant::now();
    let spec = ExperimentSpec { scenario: "acceptance_click".into(), trials: 10, couplers: 3, ..ExperimentSpec::preset("click").unwrap() };
    let res = experiment::run_click_experiment(&spec).unwrap();
    let pass = res.rows.iter().all(|r| r.rows == 165) && [1, 2].iter().all(|r| res.by_rank[r].mean >= 0.85 && res.by_rank[r].count == 30);
    report(7, "click-detector recovery (d=20, M=11, 25 dB)", pass, sweep_line(&res), t.elapsed(), minutes(15));
}

#[test]
fn criterion_08_coupler_independence() {
    let _guard = serial();
    let t = Instant::now();
    let spec = ExperimentSpec { scenario: "acceptance_couplers".into(), ..ExperimentSpec::preset("coupler_study").unwrap() };
    assert_eq!((spec.couplers, spec.trials, spec.ranks.as_slice()), (30, 1, &[2][..]));
    let res = experiment::run_coupler_study(&spec).unwrap();
    let s = res.overall();
    let one_state = res.rows.iter().all(|r| r.state_seed == res.rows[0].state_seed);
    let pass = one_state && s.count == 30 && s.mean >= 0.98 && s.std <= 0.05;
    report(
        8,
        "coupler independence (30 couplers, d=20, M=10)",
        pass,
        format!("mean={:.4} std={:.4} min={:.4}", s.mean, s.std, s.min),
        t.elapsed(),
        minutes(10),
    );
}

#[test]
fn criterion_09_solver_comparison() {
    let _guard = serial();
    let t = Instant::now();
    let spec = ExperimentSpec { scenario: "acceptance_solvers".into(), ..ExperimentSpec::preset("solver_comparison").unwrap() };
    let cmp = experiment::run_solver_comparison(&spec).unwrap();
    let paired = cmp
        .logdet
        .rows
        .iter()
        .zip(&cmp.least_squares.rows)
        .all(|(a, b)| a.state_seed == b.state_seed && a.seed == b.seed && a.coupler_seed == b.coupler_seed);
    let both = [1, 2, 3]
        .iter()
        .all(|r| cmp.logdet.by_rank[r].mean >= 0.90 && cmp.least_squares.by_rank[r].mean >= 0.90);
    let diff = cmp.overall_difference();
    let pass = paired && both && diff >= -0.02;
    report(
        9,
        "solver comparison (ranks 1-3, d=20, M=11, 25 dB)",
        pass,
        format!(
            "logdet [{}] least_squares [{}] mean(logdet-ls)={diff:+.4}",
            sweep_line(&cmp.logdet),
            sweep_line(&cmp.least_squares)
        ),
        t.elapsed(),
        minutes(15),
    );
}

#[test]
fn criterion_10_rank_dependence_shape() {
    let _guard = serial();
    let t = Instant::now();
    let spec = ExperimentSpec {
        scenario: "acceptance_rank_sweep".into(),
        ranks: (1..=10).collect(),
        trials: 5,
        couplers: 2,
        ..ExperimentSpec::preset("rank_sweep").unwrap()
    };
    let res = experiment::run_fidelity_sweep(&spec).unwrap();
    let ranks: Vec<f64> = res.by_rank.keys().map(|&r| r as f64).collect();
    let means: Vec<f64> = res.by_rank.values().map(|s| s.mean).collect();
    let rho = experiment::spearman(&ranks, &means);

    let cmp_spec = ExperimentSpec { scenario: "acceptance_coupler_cmp".into(), ranks: vec![2], trials: 10, couplers: 2, ..spec.clone() };
    let cmp = experiment::run_coupler_comparison(&cmp_spec, &[0.5, 1.0, 2.0]).unwrap();
    let gap = cmp.gap[&2];
    let pass = rho <= 0.0 && gap >= 0.1;
    report(
        10,
        "rank-dependence shape",
        pass,
        format!(
            "means={:?} spearman={rho:.3} haar={:.4} best waveguide theta={} gap={gap:.4}",
            means.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>(),
            cmp.haar.by_rank[&2].mean,
            cmp.best_theta[&2]
        ),
        t.elapsed(),
        minutes(15),
    );
}

#[test]
fn criterion_11_full_scale_configs_are_opt_in() {
    let _guard = serial();
    let t = Instant::now();
    let full = ExperimentSpec::preset("full_protocol").unwrap();
    let large = ExperimentSpec::preset("large").unwrap();
    let pass = full.trials == 200
        && full.couplers == 10
        && full.validate().is_ok()
        && large.dim() == 84
        && large.rows() == 816
        && large.trials == 15
        && large.validate().is_ok();
    report(
        11,
        "full-scale configs available as opt-in",
        pass,
        format!(
            "full_protocol {}x{} over ranks {:?}; large d={} D={} trials={}",
            full.trials,
            full.couplers,
            full.ranks,
            large.dim(),
            large.rows(),
            large.trials
        ),
        t.elapsed(),
        Duration::from_secs(1),
    );
}

/// One trial of the d=84 scenario; run with `--ignored`.
#[test]
#[ignore = "d = 84 recovery takes minutes"]
fn large_scenario_single_trial() {
    let spec = ExperimentSpec { ranks: vec![1], trials: 1, ..ExperimentSpec::preset("large").unwrap() };
    let res = experiment::run_fidelity_sweep(&spec).unwrap();
    println!("large: {}", sweep_line(&res));
    assert!(res.rows[0].is_ok());
}
