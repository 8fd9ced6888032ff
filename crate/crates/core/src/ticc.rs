//! The alternating-minimization driver.
//!
//! Each iteration solves one Toeplitz graphical lasso per cluster for the
//! current assignment (M-step), scores every window against every cluster, and
//! reassigns by dynamic programming (E-step). Iteration stops once the
//! assignment no longer changes.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assign::{assign_dp, build_costs, AssignmentPath, CostMatrix, GaussianScorer};
use crate::error::{Result, TiccError};
use crate::exec::{self, Execution};
use crate::glasso::{self, AdmmConfig, AdmmState, AdmmTraceRow, GlassoProblem};
use crate::model::{self, ObjectiveBreakdown};
use crate::timeseries::{empirical_stats, stack_windows, SubsequenceMatrix, TimeSeries};
use crate::toeplitz::BlockToeplitzMatrix;

/// Sparsity weight: one constant for every entry, or a full `nw x nw` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lambda {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Default for Lambda {
    fn default() -> Self {
        Lambda::Scalar(0.0)
    }
}

impl Lambda {
    pub fn to_matrix(&self, p: usize) -> Result<DMatrix<f64>> {
        let m = match self {
            Lambda::Scalar(v) => DMatrix::from_element(p, p, *v),
            Lambda::Matrix(rows) => {
                if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                    return Err(TiccError::Dimension(format!("lambda matrix must be {p}x{p}")));
                }
                DMatrix::from_fn(p, p, |i, j| rows[i][j])
            }
        };
        if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(TiccError::Config(
                "lambda entries must be finite and non-negative".into(),
            ));
        }
        if m != m.transpose() {
            return Err(TiccError::Config("lambda matrix must be symmetric".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// `K` contiguous, equal-length segments with seed-shuffled labels.
    #[default]
    Contiguous,
    /// Independent uniform labels, patched so every cluster is present.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiccConfig {
    pub clusters: usize,
    pub window: usize,
    pub lambda: Lambda,
    pub beta: f64,
    pub max_em_iters: usize,
    /// Cap on warm-up iterations run before the main fit; 0 disables it.
    #[serde(default = "default_warm_up_iters")]
    pub warm_up_iters: usize,
    pub seed: u64,
    pub admm: AdmmConfig,
    /// Defaults to `2 * window` when unset.
    pub min_cluster_size: Option<usize>,
    #[serde(default)]
    pub init: InitMethod,
    #[serde(default)]
    pub execution: Execution,
    /// Record every ADMM iteration in the fit diagnostics.
    #[serde(default)]
    pub debug_trace: bool,
}

fn default_warm_up_iters() -> usize {
    100
}

impl Default for TiccConfig {
    fn default() -> Self {
        Self {
            clusters: 2,
            window: 1,
            lambda: Lambda::Scalar(0.0),
            beta: 0.0,
            max_em_iters: 100,
            warm_up_iters: default_warm_up_iters(),
            seed: 0,
            admm: AdmmConfig::default(),
            min_cluster_size: None,
            init: InitMethod::Contiguous,
            execution: Execution::Parallel,
            debug_trace: false,
        }
    }
}

impl TiccConfig {
    pub fn new(clusters: usize, window: usize, lambda: f64, beta: f64) -> Self {
        Self {
            clusters,
            window,
            lambda: Lambda::Scalar(lambda),
            beta,
            ..Default::default()
        }
    }

    pub fn min_cluster_size(&self) -> usize {
        self.min_cluster_size.unwrap_or(2 * self.window).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(TiccError::Config("K must be at least 1".into()));
        }
        if self.window == 0 {
            return Err(TiccError::Config("window must be at least 1".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(TiccError::Config(format!(
                "beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if self.max_em_iters == 0 {
            return Err(TiccError::Config("max_em_iters must be at least 1".into()));
        }
        if let Lambda::Scalar(v) = self.lambda {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(TiccError::Config(format!("lambda must be finite and >= 0, got {v}")));
            }
        }
        self.admm.validate()
    }
}

/// A fitted cluster: precision, mean window, and member count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub theta: BlockToeplitzMatrix,
    pub mu: Vec<f64>,
    pub count: usize,
}

impl ClusterModel {
    pub fn new(theta: BlockToeplitzMatrix, mu: Vec<f64>, count: usize) -> Self {
        Self { theta, mu, count }
    }

    pub fn mean(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiccModel {
    pub config: TiccConfig,
    pub clusters: Vec<ClusterModel>,
    pub assignment: AssignmentPath,
    pub em_iters_run: usize,
    /// Iterations spent in the unpenalized label warm-up.
    #[serde(default)]
    pub warm_up_iters_run: usize,
    pub converged: bool,
    /// Clustering objective after each M-step.
    pub objective_trace: Vec<f64>,
    /// Number of M-step solves that hit the ADMM iteration cap.
    pub admm_nonconverged: usize,
    /// Number of empty-cluster repairs performed.
    pub empty_repairs: usize,
    /// Set when every observation is identical.
    pub degenerate_input: bool,
}

impl TiccModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn thetas(&self) -> Vec<BlockToeplitzMatrix> {
        self.clusters.iter().map(|c| c.theta.clone()).collect()
    }
}

/// Wall-clock seconds spent in each phase, summed over EM iterations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub cost_build_secs: f64,
    pub dp_secs: f64,
    pub admm_secs_per_cluster: Vec<f64>,
    pub total_secs: f64,
}

/// ADMM trace row tagged with its EM iteration and cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterTraceRow {
    pub em_iter: usize,
    pub cluster: usize,
    #[serde(flatten)]
    pub row: AdmmTraceRow,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub timings: PhaseTimings,
    pub objective_breakdowns: Vec<ObjectiveBreakdown>,
    pub admm_trace: Vec<ClusterTraceRow>,
    pub admm_iterations: Vec<Vec<usize>>,
    /// Objective-trace indices whose E-step output needed an empty-cluster
    /// repair before the next M-step.
    pub repaired_after: Vec<usize>,
}

/// Initial assignment with every cluster non-empty.
pub fn initialize(len: usize, k: usize, seed: u64, method: InitMethod) -> Result<AssignmentPath> {
    if k == 0 {
        return Err(TiccError::Config("K must be at least 1".into()));
    }
    if len < k {
        return Err(TiccError::Config(format!(
            "cannot initialize {k} clusters from {len} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = match method {
        InitMethod::Contiguous => {
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(&mut rng);
            (0..len).map(|t| perm[t * k / len]).collect()
        }
        InitMethod::UniformRandom => {
            let mut labels: Vec<usize> = (0..len).map(|_| rng.random_range(0..k)).collect();
            let mut slots: Vec<usize> = (0..len).collect();
            slots.shuffle(&mut rng);
            for (c, &t) in slots.iter().take(k).enumerate() {
                labels[t] = c;
            }
            labels
        }
    };
    Ok(AssignmentPath::new(labels))
}

/// Give empty cluster `k_empty` a contiguous block of `min_size` windows,
/// chosen where the current labels fit worst (largest summed cost). Donor
/// clusters always keep at least one member.
pub fn handle_empty_cluster(
    assignment: &AssignmentPath,
    costs: &CostMatrix,
    k_empty: usize,
    min_size: usize,
) -> Result<AssignmentPath> {
    let k = costs.clusters();
    let len = assignment.len();
    if k_empty >= k || costs.len() != len {
        return Err(TiccError::Dimension("assignment and costs disagree".into()));
    }
    let counts = assignment.counts(k);
    if counts[k_empty] > 0 {
        return Ok(assignment.clone());
    }
    let min_size = min_size.max(1);
    if len < k * min_size {
        return Err(TiccError::EmptyCluster {
            cluster: k_empty,
            reason: format!("T={len} < K*min_cluster_size={}", k * min_size),
        });
    }
    let labels = assignment.labels();
    let point_cost: Vec<f64> = labels.iter().enumerate().map(|(t, &l)| costs.get(t, l)).collect();

    // Prefer blocks that leave every donor with at least `min_size` members;
    // otherwise settle for donors that merely stay non-empty.
    let mut in_window = vec![0usize; k];
    let mut sum = 0.0;
    let mut best: [Option<(f64, usize)>; 2] = [None, None];
    for t in 0..len {
        in_window[labels[t]] += 1;
        sum += point_cost[t];
        if t >= min_size {
            in_window[labels[t - min_size]] -= 1;
            sum -= point_cost[t - min_size];
        }
        if t + 1 >= min_size {
            let start = t + 1 - min_size;
            let keeps = |floor: usize| (0..k).all(|c| in_window[c] == 0 || counts[c] >= in_window[c] + floor);
            for (tier, floor) in [min_size, 1].into_iter().enumerate() {
                if keeps(floor) && best[tier].is_none_or(|(b, _)| sum > b) {
                    best[tier] = Some((sum, start));
                }
            }
        }
    }
    let (_, start) = best[0].or(best[1]).ok_or_else(|| TiccError::EmptyCluster {
        cluster: k_empty,
        reason: "no block can be taken without emptying another cluster".into(),
    })?;
    let mut out = labels.to_vec();
    out[start..start + min_size].fill(k_empty);
    Ok(AssignmentPath::new(out))
}

/// Repair every empty cluster in index order.
fn repair_all(mut assignment: AssignmentPath, costs: &CostMatrix, min_size: usize) -> Result<(AssignmentPath, usize)> {
    let mut repairs = 0;
    for c in 0..costs.clusters() {
        if assignment.counts(costs.clusters())[c] == 0 {
            assignment = handle_empty_cluster(&assignment, costs, c, min_size)?;
            repairs += 1;
        }
    }
    Ok((assignment, repairs))
}

/// Bayesian information criterion: `-2 · loglik + q · ln T`, where `q` counts
/// free precision entries above the support threshold.
pub fn bic(model: &TiccModel, subseq: &SubsequenceMatrix) -> Result<f64> {
    if model.assignment.len() != subseq.len() {
        return Err(TiccError::Dimension("model assignment does not match the data".into()));
    }
    let scorers = model::scorers_for(&model.clusters)?;
    let nll: f64 = model
        .assignment
        .labels()
        .iter()
        .enumerate()
        .map(|(t, &l)| scorers[l].nll(subseq.row(t)))
        .sum();
    let q: usize = model.clusters.iter().map(|c| c.theta.nonzero_parameter_count()).sum();
    Ok(2.0 * nll + q as f64 * (subseq.len() as f64).ln())
}

/// E-step timing breakdown.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EStepTimings {
    pub cost_build_secs: f64,
    pub dp_secs: f64,
}

/// Score all windows and run the assignment DP.
pub fn e_step(
    subseq: &SubsequenceMatrix,
    clusters: &[ClusterModel],
    beta: f64,
    exec: Execution,
) -> Result<(AssignmentPath, CostMatrix, EStepTimings)> {
    let t0 = Instant::now();
    let scorers = clusters
        .iter()
        .map(|c| GaussianScorer::new(&c.theta, &c.mean()))
        .collect::<Result<Vec<_>>>()?;
    let costs = build_costs(subseq, &scorers, exec)?;
    let t1 = Instant::now();
    let path = assign_dp(&costs, beta)?;
    let t2 = Instant::now();
    Ok((
        path,
        costs,
        EStepTimings {
            cost_build_secs: (t1 - t0).as_secs_f64(),
            dp_secs: (t2 - t1).as_secs_f64(),
        },
    ))
}

struct MStepOutput {
    cluster: ClusterModel,
    state: AdmmState,
    converged: bool,
    iterations: usize,
    trace: Vec<AdmmTraceRow>,
    secs: f64,
}

/// Solve one cluster's graphical lasso. The clustering objective weighs the
/// negative log-likelihood as `(|P|/2)(tr(SΘ) - log det Θ)`, so the exact
/// M-step penalty is `2λ/|P|`. `penalty_count` overrides `|P|` in that ratio.
fn m_step_cluster(
    subseq: &SubsequenceMatrix,
    members: &[usize],
    lambda: &DMatrix<f64>,
    penalty_count: Option<usize>,
    cfg: &TiccConfig,
    warm: Option<&AdmmState>,
) -> Result<MStepOutput> {
    let start = Instant::now();
    let stats = empirical_stats(subseq, members)?;
    let scaled = lambda * (2.0 / penalty_count.unwrap_or(stats.count) as f64);
    let problem = GlassoProblem::new(stats.cov, scaled, subseq.sensors(), subseq.window())?;
    let mut trace = Vec::new();
    let sol = glasso::solve_from(
        &problem,
        &cfg.admm,
        warm,
        if cfg.debug_trace { Some(&mut trace) } else { None },
    )?;
    Ok(MStepOutput {
        cluster: ClusterModel::new(sol.theta, stats.mean.iter().copied().collect(), stats.count),
        state: sol.state,
        converged: sol.converged,
        iterations: sol.iterations,
        trace,
        secs: start.elapsed().as_secs_f64(),
    })
}

pub fn fit(ts: &TimeSeries, cfg: &TiccConfig) -> Result<TiccModel> {
    fit_with_diagnostics(ts, cfg).map(|(m, _)| m)
}

pub fn fit_with_diagnostics(ts: &TimeSeries, cfg: &TiccConfig) -> Result<(TiccModel, FitDiagnostics)> {
    cfg.validate()?;
    let k = cfg.clusters;
    let min_size = cfg.min_cluster_size();
    if ts.len() < k * min_size {
        return Err(TiccError::Config(format!(
            "T={} is smaller than K*min_cluster_size={}",
            ts.len(),
            k * min_size
        )));
    }
    let subseq = stack_windows(ts, cfg.window)?;
    fit_subsequences(&subseq, cfg, ts.is_constant())
}

/// Fit on pre-stacked windows.
pub fn fit_subsequences(
    subseq: &SubsequenceMatrix,
    cfg: &TiccConfig,
    degenerate_input: bool,
) -> Result<(TiccModel, FitDiagnostics)> {
    cfg.validate()?;
    let initial = initialize(subseq.len(), cfg.clusters, cfg.seed, cfg.init)?;
    fit_from_assignment(subseq, cfg, initial, degenerate_input)
}

/// Mutable state threaded through the EM phases.
struct EmState {
    assignment: AssignmentPath,
    clusters: Vec<ClusterModel>,
    admm: Vec<Option<AdmmState>>,
    admm_nonconverged: usize,
    empty_repairs: usize,
    em_iter: usize,
}

/// Settings that differ between the warm-up and the main phase.
struct Phase<'a> {
    lambda: &'a DMatrix<f64>,
    beta: f64,
    penalty_count: Option<usize>,
    max_iters: usize,
}

/// Alternate M- and E-steps until the assignment repeats or `max_iters` is
/// hit. Returns whether it stopped on a repeat.
fn run_phase(
    subseq: &SubsequenceMatrix,
    cfg: &TiccConfig,
    phase: Phase<'_>,
    st: &mut EmState,
    diag: &mut FitDiagnostics,
    mut objective_trace: Option<&mut Vec<f64>>,
) -> Result<bool> {
    let Phase {
        lambda,
        beta,
        penalty_count,
        max_iters,
    } = phase;
    let k = cfg.clusters;
    let min_size = cfg.min_cluster_size();
    for _ in 0..max_iters {
        let em_iter = st.em_iter;
        st.em_iter += 1;
        let members: Vec<Vec<usize>> = (0..k).map(|c| st.assignment.members(c)).collect();
        let outputs = exec::map_range(cfg.execution, k, |c| {
            m_step_cluster(subseq, &members[c], lambda, penalty_count, cfg, st.admm[c].as_ref())
        });
        st.clusters.clear();
        let mut iter_counts = Vec::with_capacity(k);
        for (c, out) in outputs.into_iter().enumerate() {
            let out = out?;
            if !out.converged {
                st.admm_nonconverged += 1;
            }
            diag.timings.admm_secs_per_cluster[c] += out.secs;
            iter_counts.push(out.iterations);
            diag.admm_trace.extend(out.trace.into_iter().map(|row| ClusterTraceRow {
                em_iter,
                cluster: c,
                row,
            }));
            st.clusters.push(out.cluster);
            st.admm[c] = Some(out.state);
        }
        diag.admm_iterations.push(iter_counts);

        let (next, costs, timing) = e_step(subseq, &st.clusters, beta, cfg.execution)?;
        diag.timings.cost_build_secs += timing.cost_build_secs;
        diag.timings.dp_secs += timing.dp_secs;

        if let Some(trace) = objective_trace.as_deref_mut() {
            let breakdown = model::objective_from_costs(&st.clusters, &st.assignment, &costs, lambda, beta);
            trace.push(breakdown.total);
            diag.objective_breakdowns.push(breakdown);
        }

        let (next, repairs) = repair_all(next, &costs, min_size)?;
        st.empty_repairs += repairs;
        if repairs > 0 {
            if let Some(trace) = objective_trace.as_deref() {
                diag.repaired_after.push(trace.len() - 1);
            }
        }
        if next == st.assignment {
            return Ok(true);
        }
        st.assignment = next;
    }
    Ok(false)
}

/// Run the alternating minimization from a given initial assignment.
///
/// With `warm_up_iters > 0` the labels are first refined without a switching
/// penalty and with every cluster's sparsity weight set as if it held `T/K`
/// windows. Only the second phase minimizes the clustering objective and is
/// recorded in the objective trace.
pub fn fit_from_assignment(
    subseq: &SubsequenceMatrix,
    cfg: &TiccConfig,
    initial: AssignmentPath,
    degenerate_input: bool,
) -> Result<(TiccModel, FitDiagnostics)> {
    cfg.validate()?;
    let started = Instant::now();
    let k = cfg.clusters;
    let lambda = cfg.lambda.to_matrix(subseq.width())?;
    if initial.len() != subseq.len() {
        return Err(TiccError::Dimension(format!(
            "initial assignment has {} labels for {} windows",
            initial.len(),
            subseq.len()
        )));
    }
    if let Some(&l) = initial.labels().iter().find(|&&l| l >= k) {
        return Err(TiccError::Dimension(format!("initial label {l} but K={k}")));
    }
    let mut diag = FitDiagnostics {
        timings: PhaseTimings {
            admm_secs_per_cluster: vec![0.0; k],
            ..Default::default()
        },
        ..Default::default()
    };
    let mut st = EmState {
        assignment: initial,
        clusters: Vec::new(),
        admm: vec![None; k],
        admm_nonconverged: 0,
        empty_repairs: 0,
        em_iter: 0,
    };
    if cfg.warm_up_iters > 0 {
        let balanced = (subseq.len() / k).max(1);
        let warm_up = Phase {
            lambda: &lambda,
            beta: 0.0,
            penalty_count: Some(balanced),
            max_iters: cfg.warm_up_iters,
        };
        run_phase(subseq, cfg, warm_up, &mut st, &mut diag, None)?;
    }
    let warm_up_iters_run = st.em_iter;
    let mut objective_trace = Vec::new();
    let main = Phase {
        lambda: &lambda,
        beta: cfg.beta,
        penalty_count: None,
        max_iters: cfg.max_em_iters,
    };
    let converged = run_phase(subseq, cfg, main, &mut st, &mut diag, Some(&mut objective_trace))?;
    diag.timings.total_secs = started.elapsed().as_secs_f64();

    Ok((
        TiccModel {
            config: cfg.clone(),
            clusters: st.clusters,
            assignment: st.assignment,
            em_iters_run: st.em_iter - warm_up_iters_run,
            warm_up_iters_run,
            converged,
            objective_trace,
            admm_nonconverged: st.admm_nonconverged,
            empty_repairs: st.empty_repairs,
            degenerate_input,
        },
        diag,
    ))
}
