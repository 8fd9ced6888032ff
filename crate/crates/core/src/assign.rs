//! Per-point likelihoods and the temporally consistent assignment.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TiccError};
use crate::exec::{self, Execution};
use crate::timeseries::SubsequenceMatrix;
use crate::toeplitz::BlockToeplitzMatrix;

/// `-log N(x; μ, Θ⁻¹)` for a fixed cluster, with the Cholesky factor of `Θ`
/// precomputed so each point costs one triangular product.
#[derive(Debug, Clone)]
pub struct GaussianScorer {
    /// `Lᵀ` in row-major order where `Θ = L Lᵀ`.
    upper: Vec<f64>,
    mean: Vec<f64>,
    /// `-½ log det Θ + (p/2) log 2π`.
    offset: f64,
    dim: usize,
}

impl GaussianScorer {
    pub fn new(theta: &BlockToeplitzMatrix, mean: &DVector<f64>) -> Result<Self> {
        let p = theta.size();
        if mean.len() != p {
            return Err(TiccError::Dimension(format!(
                "mean has length {}, precision is {p}x{p}",
                mean.len()
            )));
        }
        let chol = theta
            .assemble()
            .cholesky()
            .ok_or_else(|| TiccError::NotPositiveDefinite("cluster precision".into()))?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let mut upper = vec![0.0; p * p];
        for i in 0..p {
            for j in i..p {
                upper[i * p + j] = l[(j, i)];
            }
        }
        Ok(Self {
            upper,
            mean: mean.iter().copied().collect(),
            offset: -0.5 * log_det + 0.5 * p as f64 * (2.0 * PI).ln(),
            dim: p,
        })
    }

    pub fn nll(&self, x: &[f64]) -> f64 {
        let p = self.dim;
        let mut quad = 0.0;
        for i in 0..p {
            let row = &self.upper[i * p..(i + 1) * p];
            let mut y = 0.0;
            for j in i..p {
                y += row[j] * (x[j] - self.mean[j]);
            }
            quad += y * y;
        }
        0.5 * quad + self.offset
    }
}

/// Gaussian log-density of a window under a cluster model.
pub fn log_likelihood(x: &[f64], theta: &BlockToeplitzMatrix, mu: &DVector<f64>) -> Result<f64> {
    if x.len() != theta.size() {
        return Err(TiccError::Dimension(format!(
            "window has length {}, model expects {}",
            x.len(),
            theta.size()
        )));
    }
    Ok(-GaussianScorer::new(theta, mu)?.nll(x))
}

/// `T x K` negative log-likelihoods, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    nll: Vec<f64>,
    len: usize,
    clusters: usize,
}

impl CostMatrix {
    pub fn new(nll: Vec<f64>, len: usize, clusters: usize) -> Result<Self> {
        if len == 0 || clusters == 0 {
            return Err(TiccError::Empty("cost matrix has no rows or columns".into()));
        }
        if nll.len() != len * clusters {
            return Err(TiccError::Dimension(format!(
                "{} costs for a {len}x{clusters} matrix",
                nll.len()
            )));
        }
        if let Some(k) = nll.iter().position(|v| !v.is_finite()) {
            return Err(TiccError::NonFinite {
                row: k / clusters,
                column: k % clusters,
            });
        }
        Ok(Self { nll, len, clusters })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(TiccError::Dimension("ragged cost rows".into()));
        }
        Self::new(rows.concat(), rows.len(), k)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.nll[t * self.clusters + k]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.nll[t * self.clusters..(t + 1) * self.clusters]
    }
}

/// Score every window against every cluster.
pub fn build_costs(subseq: &SubsequenceMatrix, scorers: &[GaussianScorer], exec: Execution) -> Result<CostMatrix> {
    let k = scorers.len();
    if k == 0 {
        return Err(TiccError::Empty("no clusters to score against".into()));
    }
    if let Some(s) = scorers.iter().find(|s| s.dim != subseq.width()) {
        return Err(TiccError::Dimension(format!(
            "scorer dimension {} vs window width {}",
            s.dim,
            subseq.width()
        )));
    }
    const ROWS_PER_TASK: usize = 256;
    let mut nll = vec![0.0; subseq.len() * k];
    exec::fill_chunks(exec, &mut nll, ROWS_PER_TASK * k, |chunk, out| {
        let t0 = chunk * ROWS_PER_TASK;
        for (r, row) in out.chunks_mut(k).enumerate() {
            let x = subseq.row(t0 + r);
            for (v, s) in row.iter_mut().zip(scorers) {
                *v = s.nll(x);
            }
        }
    });
    CostMatrix::new(nll, subseq.len(), k)
}

/// Cluster label per time step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<usize>", into = "Vec<usize>")]
pub struct AssignmentPath {
    labels: Vec<usize>,
    num_switches: usize,
}

impl AssignmentPath {
    pub fn new(labels: Vec<usize>) -> Self {
        let num_switches = labels.windows(2).filter(|p| p[0] != p[1]).count();
        Self { labels, num_switches }
    }

    /// Validates labels against a cluster count.
    pub fn with_clusters(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(t) = labels.iter().position(|&l| l >= k) {
            return Err(TiccError::Config(format!(
                "label {} at index {t} out of range for K={k}",
                labels[t]
            )));
        }
        Ok(Self::new(labels))
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_switches(&self) -> usize {
        self.num_switches
    }

    pub fn counts(&self, k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for &l in &self.labels {
            if l < k {
                c[l] += 1;
            }
        }
        c
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(t, _)| t)
            .collect()
    }

    /// Σ nll(t, label_t) + β · switches, accumulated left to right.
    pub fn cost(&self, costs: &CostMatrix, beta: f64) -> f64 {
        let mut total = 0.0;
        for (t, &l) in self.labels.iter().enumerate() {
            if t > 0 && self.labels[t - 1] != l {
                total += beta;
            }
            total += costs.get(t, l);
        }
        total
    }
}

impl From<AssignmentPath> for Vec<usize> {
    fn from(p: AssignmentPath) -> Self {
        p.labels
    }
}

impl From<Vec<usize>> for AssignmentPath {
    fn from(v: Vec<usize>) -> Self {
        Self::new(v)
    }
}

/// Exact minimizer of `Σ_t nll(t, l_t) + β·#{t : l_t ≠ l_{t-1}}` over all
/// `K^T` label paths, in `O(TK)` time.
///
/// Ties: with `β > 0` a state keeps its own predecessor when staying costs the
/// same as switching; otherwise the lowest-index minimum is used.
pub fn assign_dp(costs: &CostMatrix, beta: f64) -> Result<AssignmentPath> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(TiccError::Config(format!("beta must be finite and >= 0, got {beta}")));
    }
    let (t_len, k) = (costs.len(), costs.clusters());
    if t_len == 0 || k == 0 {
        return Err(TiccError::Empty("empty cost matrix".into()));
    }
    let mut prev = vec![0.0; k];
    let mut cur = vec![0.0; k];
    let mut back = vec![0u32; t_len * k];
    for t in 0..t_len {
        let min_idx = argmin(&prev);
        let switch_cost = prev[min_idx] + beta;
        let row = costs.row(t);
        let bp = &mut back[t * k..(t + 1) * k];
        for j in 0..k {
            let stay = prev[j] < switch_cost || (beta > 0.0 && prev[j] == switch_cost);
            if stay {
                cur[j] = prev[j] + row[j];
                bp[j] = j as u32;
            } else {
                cur[j] = switch_cost + row[j];
                bp[j] = min_idx as u32;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let mut labels = vec![0usize; t_len];
    let mut state = argmin(&prev);
    for t in (0..t_len).rev() {
        labels[t] = state;
        state = back[t * k + state] as usize;
    }
    Ok(AssignmentPath::new(labels))
}

/// First index of the minimum.
fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    best
}
