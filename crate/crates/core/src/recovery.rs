//! Density-matrix recovery over the spectrahedron `{X : X >= 0, Tr X = 1}`.
//!
//! Both solvers share one inner engine: a monotone accelerated projected
//! gradient (MFISTA with backtracking) on
//!
//! ```text
//!     tau * Tr(W X) + ||A(X) - y||^2
//! ```
//!
//! where `tau = 0` gives constrained least squares. The LogDet heuristic runs
//! this with `W = (X_{k-1} + delta I)^{-1}` for successive `k`, shrinking `tau`
//! (raising the penalty weight `lambda = 1 / tau`) until the misfit bound
//! `||A(X) - y||^2 <= epsilon` holds.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::density::{ComplexMatrixParts, DensityMatrix};
use crate::error::{QstError, Result};
use crate::linalg::{self, CMatrix};
use crate::measurement::{MeasurementMatrix, MeasurementRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[serde(rename = "logdet")]
    LogDet,
    LeastSquares,
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::LogDet => "logdet",
            Solver::LeastSquares => "least_squares",
        }
    }
}

impl FromStr for Solver {
    type Err = QstError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logdet" | "log_det" | "log-det" => Ok(Solver::LogDet),
            "least_squares" | "least-squares" | "ls" => Ok(Solver::LeastSquares),
            other => Err(QstError::UnknownSolver(other.to_string())),
        }
    }
}

/// Which misfit bound defines feasibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Misfit {
    /// `||A(X) - y||_2^2 <= epsilon`.
    SquaredL2,
    /// `max_i |A(X)_i - y_i| <= epsilon`.
    PerEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    pub solver: Solver,
    /// Misfit bound; `None` derives it from the record (see [`RecoveryConfig::resolve_epsilon`]).
    pub epsilon: Option<f64>,
    pub misfit: Misfit,
    /// LogDet regularizer `delta`.
    pub delta: f64,
    pub max_outer_iters: usize,
    /// Iteration cap for each inner solve.
    pub max_inner_iters: usize,
    /// Outer stopping rule `||X_k - X_{k-1}||_F < convergence_tol`; also the
    /// least-squares projected-gradient certificate.
    pub convergence_tol: f64,
    /// Inner stopping rule on the Frobenius length of a proximal step.
    pub inner_tol: f64,
    /// Initial penalty weight `lambda`, in units of `1 / ||A||_op^2`.
    pub penalty_weight: f64,
    /// Factor applied to `lambda` when the misfit bound is violated.
    pub penalty_growth: f64,
    /// Largest `lambda`, in units of `1 / ||A||_op^2`.
    pub penalty_max: f64,
    pub power_iterations: usize,
    /// Eigenvalues below this are zeroed in the returned state.
    pub eigenvalue_floor: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            solver: Solver::LogDet,
            epsilon: None,
            misfit: Misfit::SquaredL2,
            delta: 1e-3,
            max_outer_iters: 20,
            max_inner_iters: 2000,
            convergence_tol: 1e-6,
            inner_tol: 1e-10,
            penalty_weight: 10.0,
            penalty_growth: 10.0,
            penalty_max: 1e9,
            power_iterations: 60,
            eigenvalue_floor: 1e-9,
        }
    }
}

pub const NOISELESS_EPSILON: f64 = 1e-12;

impl RecoveryConfig {
    pub fn with_solver(mut self, solver: Solver) -> Self {
        self.solver = solver;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(QstError::InvalidArgument(what.to_string()));
        if self.epsilon.is_some_and(|e| e.is_nan() || e < 0.0) {
            return bad("epsilon must be >= 0");
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            return bad("delta must be > 0");
        }
        if !(self.convergence_tol > 0.0 && self.inner_tol > 0.0) {
            return bad("tolerances must be > 0");
        }
        if !(self.penalty_weight > 0.0 && self.penalty_growth > 1.0 && self.penalty_max >= self.penalty_weight) {
            return bad("penalty schedule needs weight > 0, growth > 1, max >= weight");
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return bad("iteration caps must be positive");
        }
        Ok(())
    }

    /// The configured bound, or one derived from the record: the expected noise
    /// power `E||n||^2` for noisy records and [`NOISELESS_EPSILON`] otherwise. In
    /// per-entry mode the derived bound is three noise standard deviations
    /// (or `sqrt(NOISELESS_EPSILON)` when noiseless).
    pub fn resolve_epsilon(&self, record: &MeasurementRecord) -> f64 {
        if let Some(e) = self.epsilon {
            return e;
        }
        let power = record.noise_power.filter(|p| *p > 0.0);
        match (self.misfit, power) {
            (Misfit::SquaredL2, Some(p)) => p,
            (Misfit::SquaredL2, None) => NOISELESS_EPSILON,
            (Misfit::PerEntry, Some(p)) => 3.0 * (p / record.len().max(1) as f64).sqrt(),
            (Misfit::PerEntry, None) => NOISELESS_EPSILON.sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub rho: DensityMatrix,
    pub solver: Solver,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// `||A(rho) - y||_2`.
    pub residual: f64,
    pub converged: bool,
    /// Whether the misfit bound was met.
    pub feasible: bool,
    pub epsilon: f64,
    /// Final penalty weight in units of `1 / ||A||_op^2` (LogDet only).
    pub penalty_weight: Option<f64>,
    /// The inner objective never increased across accepted steps.
    pub monotone: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub rho: ComplexMatrixParts,
    pub solver: Solver,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub residual: f64,
    pub converged: bool,
    pub feasible: bool,
    pub epsilon: f64,
    pub penalty_weight: Option<f64>,
    pub monotone: bool,
}

impl RecoveryResult {
    pub fn report(&self) -> RecoveryReport {
        RecoveryReport {
            rho: self.rho.to_parts(),
            solver: self.solver,
            outer_iters: self.outer_iters,
            inner_iters: self.inner_iters,
            residual: self.residual,
            converged: self.converged,
            feasible: self.feasible,
            epsilon: self.epsilon,
            penalty_weight: self.penalty_weight,
            monotone: self.monotone,
        }
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn project_matrix(h: &CMatrix) -> CMatrix {
    let (vals, vecs) = linalg::eigh(h);
    let p = project_simplex(&vals);
    linalg::from_spectrum(&p, &vecs)
}

/// Frobenius-nearest trace-one PSD matrix to the Hermitian part of `h`.
pub fn project_spectrahedron(h: &CMatrix) -> Result<DensityMatrix> {
    let (rows, cols) = h.shape();
    if rows != cols || rows == 0 {
        return Err(QstError::NotSquare { rows, cols });
    }
    let p = project_matrix(h);
    Ok(DensityMatrix::from_trusted(linalg::hermitian_part(&p), None))
}

struct Problem<'a> {
    a: &'a MeasurementMatrix,
    y: &'a [f64],
}

impl Problem<'_> {
    fn residual(&self, x: &CMatrix) -> Vec<f64> {
        self.a
            .apply(x)
            .into_iter()
            .zip(self.y)
            .map(|(ax, y)| ax - y)
            .collect()
    }

    fn data_gradient(&self, r: &[f64]) -> CMatrix {
        self.a.adjoint(r).scale(2.0)
    }
}

fn sq_norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

struct InnerOutcome {
    x: CMatrix,
    iters: usize,
    monotone: bool,
}

/// MFISTA on `tau Tr(W X) + ||A(X) - y||^2` over the spectrahedron, starting
/// from a feasible `x0`. `lipschitz` carries the backtracking estimate between calls.
fn solve_penalized(
    prob: &Problem<'_>,
    linear: Option<(&CMatrix, f64)>,
    x0: CMatrix,
    lipschitz: &mut f64,
    max_iters: usize,
    tol: f64,
    history: Option<&mut Vec<f64>>,
) -> InnerOutcome {
    let lin_value = |x: &CMatrix| linear.map_or(0.0, |(w, tau)| tau * linalg::real_inner(w, x));
    let mut x = x0;
    let mut rx = prob.residual(&x);
    let mut fx = lin_value(&x) + sq_norm(&rx);
    let mut y = x.clone();
    let mut ry = rx.clone();
    let mut t = 1.0f64;
    let mut monotone = true;
    let mut z_prev: Option<CMatrix> = None;
    let mut hist = history;
    if let Some(h) = hist.as_deref_mut() {
        h.push(fx);
    }

    for it in 1..=max_iters {
        let smooth_y = sq_norm(&ry);
        let mut grad = prob.data_gradient(&ry);
        if let Some((w, tau)) = linear {
            grad += w.scale(tau);
        }
        let (z, rz) = loop {
            let z = project_matrix(&(&y - grad.unscale(*lipschitz)));
            let rz = prob.residual(&z);
            let step = &z - &y;
            let bound = smooth_y
                + 2.0 * (linalg::real_inner(&prob.a.adjoint(&ry), &step))
                + 0.5 * *lipschitz * step.norm_squared();
            if sq_norm(&rz) <= bound * (1.0 + 1e-12) + 1e-300 {
                break (z, rz);
            }
            *lipschitz *= 2.0;
        };
        let step_len = (&z - &y).norm();
        let fz = lin_value(&z) + sq_norm(&rz);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let x_prev = x.clone();
        if fz <= fx {
            x = z.clone();
            rx = rz;
            fx = fz;
        }
        // gradient restart: the step from y points against the last move
        let restart = z_prev
            .as_ref()
            .is_some_and(|zp| linalg::real_inner(&(&y - &z), &(&z - zp)) > 0.0);
        if restart {
            y = x.clone();
            t = 1.0;
        } else {
            y = &x + (&z - &x).scale(t / t_next) + (&x - &x_prev).scale((t - 1.0) / t_next);
            t = t_next;
        }
        z_prev = Some(z);
        ry = if y == x { rx.clone() } else { prob.residual(&y) };

        if let Some(h) = hist.as_deref_mut() {
            if h.last().is_some_and(|&last| fx > last) {
                monotone = false;
            }
            h.push(fx);
        }
        debug_assert!(fx.is_finite());

        if step_len <= tol {
            return InnerOutcome { x, iters: it, monotone };
        }
    }
    InnerOutcome { x, iters: max_iters, monotone }
}

/// `||X - P(X - grad f(X) / L)||_F` for the least-squares objective.
fn projected_gradient_norm(prob: &Problem<'_>, x: &CMatrix, lipschitz: f64) -> f64 {
    let g = prob.data_gradient(&prob.residual(x));
    (x - project_matrix(&(x - g.unscale(lipschitz)))).norm()
}

fn check_shapes(y: &MeasurementRecord, a: &MeasurementMatrix) -> Result<()> {
    if y.len() != a.rows() {
        return Err(QstError::DimensionMismatch {
            expected: a.rows(),
            actual: y.len(),
        });
    }
    Ok(())
}

fn finalize(x: &CMatrix, floor: f64) -> DensityMatrix {
    let (vals, vecs) = linalg::eigh(x);
    let mut clipped: Vec<f64> = vals.iter().map(|&l| if l < floor { 0.0 } else { l }).collect();
    let total: f64 = clipped.iter().sum();
    if total > 0.0 {
        clipped.iter_mut().for_each(|l| *l /= total);
    } else {
        let d = clipped.len() as f64;
        clipped.iter_mut().for_each(|l| *l = 1.0 / d);
    }
    DensityMatrix::from_trusted(linalg::hermitian_part(&linalg::from_spectrum(&clipped, &vecs)), None)
}

fn is_feasible(r: &[f64], eps: f64, misfit: Misfit) -> bool {
    match misfit {
        Misfit::SquaredL2 => sq_norm(r) <= eps,
        Misfit::PerEntry => r.iter().all(|v| v.abs() <= eps),
    }
}

fn initial_lipschitz(a: &MeasurementMatrix, cfg: &RecoveryConfig) -> f64 {
    let norm_sq = a.operator_norm_sq(cfg.power_iterations);
    (2.0 * norm_sq).max(1e-12)
}

#[allow(clippy::too_many_arguments)]
fn result_from(
    x: &CMatrix,
    prob: &Problem<'_>,
    cfg: &RecoveryConfig,
    eps: f64,
    solver: Solver,
    outer_iters: usize,
    inner_iters: usize,
    converged: bool,
    penalty_weight: Option<f64>,
    monotone: bool,
) -> RecoveryResult {
    let rho = finalize(x, cfg.eigenvalue_floor);
    let r = prob.residual(rho.matrix());
    RecoveryResult {
        feasible: is_feasible(&r, eps, cfg.misfit),
        residual: sq_norm(&r).sqrt(),
        rho,
        solver,
        outer_iters,
        inner_iters,
        converged,
        epsilon: eps,
        penalty_weight,
        monotone,
    }
}

/// `min ||A(X) - y||^2` over the spectrahedron.
pub fn recover_least_squares(y: &MeasurementRecord, a: &MeasurementMatrix, cfg: &RecoveryConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    check_shapes(y, a)?;
    let eps = cfg.resolve_epsilon(y);
    let prob = Problem { a, y: &y.values };
    let d = a.dim();
    let mut lipschitz = initial_lipschitz(a, cfg);
    let mut history = Vec::new();
    let x0 = CMatrix::identity(d, d).unscale(d as f64);
    let out = solve_penalized(
        &prob,
        None,
        x0,
        &mut lipschitz,
        cfg.max_inner_iters,
        cfg.inner_tol,
        Some(&mut history),
    );
    let certificate = projected_gradient_norm(&prob, &out.x, lipschitz);
    let converged = certificate <= cfg.convergence_tol;
    Ok(result_from(
        &out.x,
        &prob,
        cfg,
        eps,
        Solver::LeastSquares,
        1,
        out.iters,
        converged,
        None,
        out.monotone,
    ))
}

/// Iteratively reweighted trace minimization (LogDet heuristic).
pub fn recover_logdet(y: &MeasurementRecord, a: &MeasurementMatrix, cfg: &RecoveryConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    check_shapes(y, a)?;
    let eps = cfg.resolve_epsilon(y);
    let prob = Problem { a, y: &y.values };
    let d = a.dim();
    let norm_sq = a.operator_norm_sq(cfg.power_iterations).max(1e-12);
    let mut lipschitz = 2.0 * norm_sq;

    let mut x = CMatrix::identity(d, d).unscale(d as f64);
    // penalty weight in units of 1 / ||A||^2; tau = 1 / lambda
    let mut weight = cfg.penalty_weight;
    let mut inner_total = 0;
    let mut outer = 0;
    let mut converged = false;
    let mut monotone = true;
    let mut history = Vec::new();

    while outer < cfg.max_outer_iters {
        outer += 1;
        let (vals, vecs) = linalg::eigh(&x);
        let inv: Vec<f64> = vals.iter().map(|&l| 1.0 / (l.max(0.0) + cfg.delta)).collect();
        let top = inv.iter().copied().fold(0.0, f64::max);
        let w = linalg::from_spectrum(&inv.iter().map(|v| v / top).collect::<Vec<_>>(), &vecs);

        let mut xk = x.clone();
        loop {
            let tau = norm_sq / weight;
            history.clear();
            let out = solve_penalized(
                &prob,
                Some((&w, tau)),
                xk,
                &mut lipschitz,
                cfg.max_inner_iters,
                cfg.inner_tol,
                Some(&mut history),
            );
            inner_total += out.iters;
            monotone &= out.monotone;
            xk = out.x;
            let r = prob.residual(&xk);
            if is_feasible(&r, eps, cfg.misfit) || weight >= cfg.penalty_max {
                break;
            }
            weight = (weight * cfg.penalty_growth).min(cfg.penalty_max);
        }

        let change = (&xk - &x).norm();
        x = xk;
        if change < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    Ok(result_from(
        &x,
        &prob,
        cfg,
        eps,
        Solver::LogDet,
        outer,
        inner_total,
        converged,
        Some(weight),
        monotone,
    ))
}

/// Dispatch on `cfg.solver`.
pub fn recover(y: &MeasurementRecord, a: &MeasurementMatrix, cfg: &RecoveryConfig) -> Result<RecoveryResult> {
    if y.mode != a.mode() {
        return Err(QstError::InvalidArgument(format!(
            "record mode {:?} does not match measurement matrix mode {:?}",
            y.mode,
            a.mode()
        )));
    }
    match cfg.solver {
        Solver::LogDet => recover_logdet(y, a, cfg),
        Solver::LeastSquares => recover_least_squares(y, a, cfg),
    }
}
