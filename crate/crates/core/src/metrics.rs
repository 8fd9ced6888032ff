//! Clustering accuracy and network-recovery scores against ground truth.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TiccError};
use crate::toeplitz::BlockToeplitzMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `permutation[estimated] = true` cluster.
    pub permutation: Vec<usize>,
    /// F1 per true cluster; `None` when the pair is absent from both labelings.
    pub per_cluster_f1: Vec<Option<f64>>,
    pub macro_f1: f64,
    /// Average of per-cluster F1 weighted by true cluster size.
    pub micro_f1: f64,
}

/// Everything written to a scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub per_cluster_f1: Vec<Option<f64>>,
    pub network_f1: Option<f64>,
    pub matching: Vec<usize>,
}

impl Scores {
    pub fn new(m: MatchResult, network_f1: Option<f64>) -> Self {
        Self {
            macro_f1: m.macro_f1,
            micro_f1: m.micro_f1,
            per_cluster_f1: m.per_cluster_f1,
            network_f1,
            matching: m.permutation,
        }
    }
}

fn f1(tp: usize, predicted: usize, actual: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / predicted as f64;
    let recall = tp as f64 / actual as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Match estimated clusters to true ones so the summed per-cluster F1 is
/// maximal, then report macro and size-weighted F1.
pub fn macro_f1(pred: &[usize], truth: &[usize], k: usize) -> Result<MatchResult> {
    if pred.len() != truth.len() {
        return Err(TiccError::Dimension(format!(
            "prediction has {} labels, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() || k == 0 {
        return Err(TiccError::Empty("nothing to score".into()));
    }
    if let Some(&l) = pred.iter().chain(truth).find(|&&l| l >= k) {
        return Err(TiccError::Config(format!("label {l} out of range for K={k}")));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    let mut pred_count = vec![0usize; k];
    let mut true_count = vec![0usize; k];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[p][t] += 1;
        pred_count[p] += 1;
        true_count[t] += 1;
    }
    let score = |e: usize, t: usize| f1(confusion[e][t], pred_count[e], true_count[t]);
    let cost: Vec<Vec<f64>> = (0..k).map(|e| (0..k).map(|t| -score(e, t)).collect()).collect();
    let permutation = hungarian(&cost);

    let mut per_cluster_f1 = vec![None; k];
    for (e, &t) in permutation.iter().enumerate() {
        if pred_count[e] > 0 || true_count[t] > 0 {
            per_cluster_f1[t] = Some(score(e, t));
        }
    }
    let scored: Vec<(usize, f64)> = per_cluster_f1
        .iter()
        .enumerate()
        .filter_map(|(t, v)| v.map(|v| (t, v)))
        .collect();
    let macro_f1 = scored.iter().map(|s| s.1).sum::<f64>() / scored.len() as f64;
    let micro_f1 = scored.iter().map(|&(t, v)| v * true_count[t] as f64).sum::<f64>() / truth.len() as f64;
    Ok(MatchResult {
        permutation,
        per_cluster_f1,
        macro_f1,
        micro_f1,
    })
}

/// F1 of the estimated edge support against the true one for each matched
/// pair, averaged over clusters. `matching[estimated] = true`.
pub fn network_f1(estimated: &[BlockToeplitzMatrix], truth: &[BlockToeplitzMatrix], matching: &[usize]) -> Result<f64> {
    if estimated.len() != truth.len() || matching.len() != estimated.len() || estimated.is_empty() {
        return Err(TiccError::Dimension(format!(
            "{} estimated, {} true, {} matched clusters",
            estimated.len(),
            truth.len(),
            matching.len()
        )));
    }
    let mut seen = vec![false; truth.len()];
    let mut total = 0.0;
    for (e, &t) in matching.iter().enumerate() {
        if t >= truth.len() || std::mem::replace(&mut seen[t], true) {
            return Err(TiccError::Config("matching is not a permutation".into()));
        }
        let (est, tru) = (&estimated[e], &truth[t]);
        if est.n() != tru.n() || est.w() != tru.w() {
            return Err(TiccError::Dimension(format!(
                "cluster {e} is ({}, {}), truth is ({}, {})",
                est.n(),
                est.w(),
                tru.n(),
                tru.w()
            )));
        }
        total += edge_f1(est, tru);
    }
    Ok(total / matching.len() as f64)
}

/// Edge-support F1 of one estimate. Two empty supports agree perfectly.
pub fn edge_f1(estimated: &BlockToeplitzMatrix, truth: &BlockToeplitzMatrix) -> f64 {
    let est: BTreeSet<_> = estimated.edge_support().into_iter().collect();
    let tru: BTreeSet<_> = truth.edge_support().into_iter().collect();
    if est.is_empty() && tru.is_empty() {
        return 1.0;
    }
    f1(est.intersection(&tru).count(), est.len(), tru.len())
}

/// Minimum-cost perfect matching on a square matrix (Hungarian method with
/// potentials). Returns `row -> column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let cur = cost[r - 1][c - 1] - u[r] - v[c];
                if cur < minv[c] {
                    minv[c] = cur;
                    way[c] = col0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for c in 1..=n {
        if owner[c] > 0 {
            assignment[owner[c] - 1] = c - 1;
        }
    }
    assignment
}
