//! Toeplitz graphical lasso.
//!
//! Solves
//!
//! ```text
//! minimize   -log det Θ + tr(S Θ) + ‖λ ∘ Θ‖₁
//! subject to Θ symmetric block Toeplitz
//! ```
//!
//! by ADMM on the split `Θ = Z`, `Z` block Toeplitz. The Θ-step has a closed
//! form through one symmetric eigendecomposition; the Z-step decouples into one
//! scalar soft-threshold per free entry of the Toeplitz parameterization.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TiccError};
use crate::toeplitz::{self, nearest_toeplitz, BlockToeplitzMatrix, OccurrenceSet};

/// Relative symmetry tolerance applied to `S` and `λ` on construction.
const INPUT_SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GlassoProblem {
    s: DMatrix<f64>,
    lambda: DMatrix<f64>,
    n: usize,
    w: usize,
}

impl GlassoProblem {
    pub fn new(s: DMatrix<f64>, lambda: DMatrix<f64>, n: usize, w: usize) -> Result<Self> {
        let p = n * w;
        if p == 0 || s.shape() != (p, p) || lambda.shape() != (p, p) {
            return Err(TiccError::Dimension(format!(
                "S is {:?} and lambda is {:?}, expected ({p}, {p})",
                s.shape(),
                lambda.shape()
            )));
        }
        if let Some(k) = s.iter().position(|v| !v.is_finite()) {
            return Err(TiccError::NonFinite {
                row: k % p,
                column: k / p,
            });
        }
        if lambda.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(TiccError::Config(
                "lambda entries must be finite and non-negative".into(),
            ));
        }
        for (name, m) in [("S", &s), ("lambda", &lambda)] {
            let scale = m.amax().max(1.0);
            if (m - m.transpose()).amax() > INPUT_SYMMETRY_TOL * scale {
                return Err(TiccError::Config(format!("{name} is not symmetric")));
            }
        }
        let s = (&s + s.transpose()) * 0.5;
        let lambda = (&lambda + lambda.transpose()) * 0.5;
        Ok(Self { s, lambda, n, w })
    }

    pub fn with_scalar_lambda(s: DMatrix<f64>, lambda: f64, n: usize, w: usize) -> Result<Self> {
        let p = n * w;
        Self::new(s, DMatrix::from_element(p, p, lambda), n, w)
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w(&self) -> usize {
        self.w
    }

    /// `-log det Θ + tr(SΘ) + ‖λ∘Θ‖₁`; errors when `Θ` is not positive definite.
    pub fn objective(&self, theta: &DMatrix<f64>) -> Result<f64> {
        let logdet = log_det_pd(theta)?;
        let trace = self.s.component_mul(theta).sum();
        let l1 = self.lambda.component_mul(&theta.abs()).sum();
        Ok(-logdet + trace + l1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            max_iter: 1000,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(TiccError::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return Err(TiccError::Config("ADMM tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(TiccError::Config("ADMM max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Iterates carried between ADMM calls; reused as a warm start.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub theta: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub rho: f64,
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
}

impl AdmmState {
    pub fn cold(p: usize, rho: f64) -> Self {
        Self {
            theta: DMatrix::identity(p, p),
            z: DMatrix::identity(p, p),
            u: DMatrix::zeros(p, p),
            rho,
            iter: 0,
            primal_res: f64::INFINITY,
            dual_res: f64::INFINITY,
        }
    }
}

/// One row of the optional per-iteration diagnostic trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmTraceRow {
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
    /// Problem objective at the current Θ iterate.
    pub objective: f64,
    /// `‖-Θ⁻¹ + S + ρ(Θ - Z + U)‖_F` right after the Θ-update.
    pub stationarity: f64,
}

#[derive(Debug, Clone)]
pub struct GlassoSolution {
    /// The consensus variable `Z`, exactly block Toeplitz.
    pub theta: BlockToeplitzMatrix,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub state: AdmmState,
}

/// Closed-form minimizer of `-log det Θ + tr(SΘ) + (ρ/2)‖Θ - Z + U‖²_F`.
pub fn theta_update(z: &DMatrix<f64>, u: &DMatrix<f64>, s: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    theta_update_eigen(z, u, s, rho).map(|(theta, _)| theta)
}

/// Θ-update that also returns `Θ⁻¹`, which falls out of the same eigenbasis.
fn theta_update_eigen(
    z: &DMatrix<f64>,
    u: &DMatrix<f64>,
    s: &DMatrix<f64>,
    rho: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut a = (z - u) * rho - s;
    a = (&a + a.transpose()) * 0.5;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(TiccError::Eigen("non-finite input to theta update".into()));
    }
    let eig = SymmetricEigen::new(a);
    let q = &eig.eigenvectors;
    let vals: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&d| {
            let root = (d * d + 4.0 * rho).sqrt();
            // d + root cancels for large negative d
            if d >= 0.0 {
                (d + root) / (2.0 * rho)
            } else {
                2.0 / (root - d)
            }
        })
        .collect();
    if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(TiccError::Eigen(
            "theta update produced a non-positive eigenvalue".into(),
        ));
    }
    let theta = rebuild(q, vals.iter().copied());
    let inv = rebuild(q, vals.iter().map(|v| 1.0 / v));
    Ok((theta, inv))
}

fn rebuild(q: &DMatrix<f64>, diag: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let mut scaled = q.clone();
    for (mut col, d) in scaled.column_iter_mut().zip(diag) {
        col *= d;
    }
    let m = scaled * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Stationarity residual of the Θ-subproblem.
pub fn theta_stationarity(
    theta: &DMatrix<f64>,
    z: &DMatrix<f64>,
    u: &DMatrix<f64>,
    s: &DMatrix<f64>,
    rho: f64,
) -> Result<f64> {
    let inv = theta
        .clone()
        .cholesky()
        .ok_or_else(|| TiccError::NotPositiveDefinite("theta".into()))?
        .inverse();
    Ok((-inv + s + (theta - z + u) * rho).norm())
}

/// Soft-threshold solution shared by all positions of one occurrence set.
pub fn prox_shared_value(sum_s: f64, q: f64, rho: f64, r: usize) -> f64 {
    let denom = rho * r as f64;
    let hi = (rho * sum_s - q) / denom;
    if hi > 0.0 {
        return hi;
    }
    let lo = (rho * sum_s + q) / denom;
    if lo < 0.0 {
        lo
    } else {
        0.0
    }
}

/// Proximal step onto the block-Toeplitz set with weighted ℓ1 penalty.
/// Sets write disjoint positions, so the order of `occ` does not matter.
pub fn z_update(
    theta: &DMatrix<f64>,
    u: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    rho: f64,
    occ: &[OccurrenceSet],
) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(theta.nrows(), theta.ncols());
    for set in occ {
        let (mut sum_s, mut q) = (0.0, 0.0);
        for &p in &set.positions {
            sum_s += theta[p] + u[p];
            q += lambda[p];
        }
        let v = prox_shared_value(sum_s, q, rho, set.count());
        for &p in &set.positions {
            z[p] = v;
        }
    }
    z
}

pub fn solve(problem: &GlassoProblem, cfg: &AdmmConfig) -> Result<GlassoSolution> {
    solve_from(problem, cfg, None, None)
}

/// ADMM from an optional warm start. When `trace` is given one row per
/// iteration is appended.
pub fn solve_from(
    problem: &GlassoProblem,
    cfg: &AdmmConfig,
    warm: Option<&AdmmState>,
    mut trace: Option<&mut Vec<AdmmTraceRow>>,
) -> Result<GlassoSolution> {
    cfg.validate()?;
    let (n, w) = (problem.n, problem.w);
    let p = n * w;
    let occ = toeplitz::occurrence_sets(n, w);
    let rho = cfg.rho;

    let mut state = match warm {
        Some(st) if st.z.shape() == (p, p) => {
            // scaled dual depends on rho
            let mut st = st.clone();
            st.u *= st.rho / rho;
            st.rho = rho;
            st.iter = 0;
            st
        }
        _ => AdmmState::cold(p, rho),
    };

    let sqrt_p = (p as f64).sqrt();
    let mut converged = false;
    for k in 1..=cfg.max_iter {
        let (theta, theta_inv) = theta_update_eigen(&state.z, &state.u, &problem.s, rho)?;
        let z_new = z_update(&theta, &state.u, &problem.lambda, rho, &occ);
        let u_new = &state.u + &theta - &z_new;

        let primal = (&theta - &z_new).norm();
        let dual = rho * (&z_new - &state.z).norm();
        let eps_pri = sqrt_p * cfg.eps_abs + cfg.eps_rel * theta.norm().max(z_new.norm());
        let eps_dual = sqrt_p * cfg.eps_abs + cfg.eps_rel * rho * u_new.norm();

        if let Some(rows) = trace.as_deref_mut() {
            let stationarity = (-&theta_inv + &problem.s + (&theta - &state.z + &state.u) * rho).norm();
            let objective = problem.objective(&theta).unwrap_or(f64::NAN);
            rows.push(AdmmTraceRow {
                iter: k,
                primal_res: primal,
                dual_res: dual,
                eps_pri,
                eps_dual,
                objective,
                stationarity,
            });
        }

        state.theta = theta;
        state.z = z_new;
        state.u = u_new;
        state.iter = k;
        state.primal_res = primal;
        state.dual_res = dual;

        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }
    }

    let (theta, objective) = finalize(problem, &state)?;
    Ok(GlassoSolution {
        theta,
        objective,
        converged,
        iterations: state.iter,
        state,
    })
}

/// Prefer the sparse consensus `Z`; fall back to the projected `Θ` when an
/// unconverged `Z` is not positive definite.
fn finalize(problem: &GlassoProblem, state: &AdmmState) -> Result<(BlockToeplitzMatrix, f64)> {
    let (n, w) = (problem.n, problem.w);
    if let Ok(obj) = problem.objective(&state.z) {
        return Ok((nearest_toeplitz(&state.z, n, w)?, obj));
    }
    let projected = nearest_toeplitz(&state.theta, n, w)?;
    let obj = problem.objective(&projected.assemble())?;
    Ok((projected, obj))
}

/// `log det` via Cholesky; errors when the matrix is not positive definite.
pub fn log_det_pd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| TiccError::NotPositiveDefinite("cholesky failed".into()))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn theta_update_identity_fixed_point() {
        let z = DMatrix::zeros(3, 3);
        let th = theta_update(&z, &z, &z, 1.0).unwrap();
        assert_abs_diff_eq!(th, DMatrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn theta_update_scalar_golden_ratio() {
        let th = theta_update(&m1(0.0), &m1(0.0), &m1(1.0), 1.0).unwrap();
        let expected = (-1.0 + 5f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(th[(0, 0)], expected, epsilon = 1e-14);
        // -1/θ + 1 + θ = 0
        assert_abs_diff_eq!(-1.0 / th[(0, 0)] + 1.0 + th[(0, 0)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn theta_update_stationary_on_random_inputs() {
        let p = 6;
        let z = DMatrix::from_fn(p, p, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 * 0.1 + if i == j { 1.0 } else { 0.0 }
        });
        let z = (&z + z.transpose()) * 0.5;
        let u = DMatrix::from_fn(p, p, |i, j| (i as f64 - j as f64) * 0.01);
        let u = (&u + u.transpose()) * 0.5;
        let s = DMatrix::from_fn(p, p, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()));
        for rho in [0.1, 1.0, 10.0] {
            let th = theta_update(&z, &u, &s, rho).unwrap();
            let res = theta_stationarity(&th, &z, &u, &s, rho).unwrap();
            assert!(res <= 1e-8 * p as f64, "rho={rho} res={res}");
            assert!(th.clone().cholesky().is_some());
        }
    }

    #[test]
    fn theta_update_rejects_non_finite() {
        assert!(theta_update(&m1(f64::NAN), &m1(0.0), &m1(1.0), 1.0).is_err());
    }

    #[test]
    fn prox_examples() {
        assert_abs_diff_eq!(prox_shared_value(1.2, 0.2, 1.0, 2), 0.5, epsilon = 1e-15);
        assert_eq!(prox_shared_value(1.2, 2.0, 1.0, 2), 0.0);
        assert_abs_diff_eq!(prox_shared_value(-1.2, 0.2, 1.0, 2), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn z_update_zero_penalty_is_projection() {
        let (n, w) = (2, 3);
        let p = n * w;
        let occ = toeplitz::occurrence_sets(n, w);
        let theta = DMatrix::from_fn(p, p, |i, j| ((i * 5 + j * 11) % 7) as f64 - 3.0);
        let u = DMatrix::from_fn(p, p, |i, j| (i + j) as f64 * 0.05);
        let z = z_update(&theta, &u, &DMatrix::zeros(p, p), 1.0, &occ);
        let proj = nearest_toeplitz(&(&theta + &u), n, w).unwrap().assemble();
        assert_abs_diff_eq!(z, proj, epsilon = 1e-12);
        assert_eq!(nearest_toeplitz(&z, n, w).unwrap().assemble(), z);
    }

    #[test]
    fn z_update_scalar_window_examples() {
        let occ = toeplitz::occurrence_sets(1, 2);
        let theta = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.7, 1.0]);
        let u = DMatrix::zeros(2, 2);
        let z = z_update(&theta, &u, &DMatrix::from_element(2, 2, 0.1), 1.0, &occ);
        assert_abs_diff_eq!(z[(0, 1)], 0.5, epsilon = 1e-15);
        assert_eq!(z[(0, 1)], z[(1, 0)]);
        let z = z_update(&theta, &u, &DMatrix::from_element(2, 2, 1.0), 1.0, &occ);
        assert_eq!(z[(0, 1)], 0.0);
    }

    #[test]
    fn z_update_order_invariant() {
        let (n, w) = (3, 3);
        let p = n * w;
        let occ = toeplitz::occurrence_sets(n, w);
        let mut rev = occ.clone();
        rev.reverse();
        let theta = DMatrix::from_fn(p, p, |i, j| ((i * 13 + j * 7) % 11) as f64 / 11.0);
        let u = DMatrix::from_fn(p, p, |i, j| ((i + 2 * j) % 3) as f64 * 0.01);
        let lam = DMatrix::from_element(p, p, 0.05);
        assert_eq!(
            z_update(&theta, &u, &lam, 1.3, &occ),
            z_update(&theta, &u, &lam, 1.3, &rev)
        );
    }

    #[test]
    fn solve_scalar_mle() {
        let prob = GlassoProblem::with_scalar_lambda(m1(1.0), 0.0, 1, 1).unwrap();
        let sol = solve(&prob, &AdmmConfig::default()).unwrap();
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.theta.block(0)[(0, 0)], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn solve_toeplitz_inverse() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let prob = GlassoProblem::with_scalar_lambda(s, 0.0, 1, 2).unwrap();
        let cfg = AdmmConfig {
            eps_abs: 1e-10,
            eps_rel: 1e-10,
            max_iter: 20_000,
            ..Default::default()
        };
        let sol = solve(&prob, &cfg).unwrap();
        assert!(sol.converged);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]) / 0.75;
        assert_abs_diff_eq!(sol.theta.assemble(), expected, epsilon = 1e-7);
    }

    #[test]
    fn solve_rank_deficient_stays_pd() {
        // two samples in four dimensions
        let x = [[1.0, -0.5, 0.3, 2.0], [-1.0, 0.5, -0.3, -2.0]];
        let s = DMatrix::from_fn(4, 4, |i, j| (x[0][i] * x[0][j] + x[1][i] * x[1][j]) / 2.0);
        let prob = GlassoProblem::with_scalar_lambda(s, 0.2, 2, 2).unwrap();
        let sol = solve(&prob, &AdmmConfig::default()).unwrap();
        assert!(sol.theta.assemble().cholesky().is_some());
        assert!(sol.objective.is_finite());
    }

    #[test]
    fn problem_validation() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(GlassoProblem::with_scalar_lambda(s, 0.1, 1, 2).is_err());
        assert!(GlassoProblem::with_scalar_lambda(DMatrix::identity(2, 2), -1.0, 1, 2).is_err());
        assert!(GlassoProblem::with_scalar_lambda(DMatrix::identity(3, 3), 0.1, 1, 2).is_err());
        let mut s = DMatrix::identity(2, 2);
        s[(0, 0)] = f64::INFINITY;
        assert!(GlassoProblem::with_scalar_lambda(s, 0.1, 1, 2).is_err());
    }

    #[test]
    fn max_iter_reports_non_convergence() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let prob = GlassoProblem::with_scalar_lambda(s, 0.01, 1, 2).unwrap();
        let cfg = AdmmConfig {
            max_iter: 2,
            ..Default::default()
        };
        let sol = solve(&prob, &cfg).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
        assert!(sol.objective.is_finite());
    }

    #[test]
    fn trace_rows_satisfy_stationarity() {
        let (n, w) = (2, 3);
        let p = n * w;
        let s = DMatrix::from_fn(p, p, |i, j| 0.6f64.powi((i as i32 - j as i32).abs()));
        let prob = GlassoProblem::with_scalar_lambda(s, 0.05, n, w).unwrap();
        let mut rows = Vec::new();
        let sol = solve_from(&prob, &AdmmConfig::default(), None, Some(&mut rows)).unwrap();
        assert_eq!(rows.len(), sol.iterations);
        assert!(rows.iter().all(|r| r.stationarity <= 1e-8 * p as f64));
    }

    #[test]
    fn warm_start_reduces_iterations() {
        let (n, w) = (2, 3);
        let p = n * w;
        let s = DMatrix::from_fn(p, p, |i, j| 0.5f64.powi((i as i32 - j as i32).abs()));
        let prob = GlassoProblem::with_scalar_lambda(s, 0.05, n, w).unwrap();
        let cfg = AdmmConfig::default();
        let cold = solve(&prob, &cfg).unwrap();
        let warm = solve_from(&prob, &cfg, Some(&cold.state), None).unwrap();
        assert!(warm.iterations < cold.iterations);
        assert_abs_diff_eq!(warm.objective, cold.objective, epsilon = 1e-6);
    }
}
