//! The full clustering objective: sparsity + negative log-likelihood + switching.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assign::{AssignmentPath, CostMatrix, GaussianScorer};
use crate::error::{Result, TiccError};
use crate::ticc::{ClusterModel, Lambda, TiccModel};
use crate::timeseries::SubsequenceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub sparsity_term: f64,
    pub nll_term: f64,
    pub switching_term: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    fn new(sparsity_term: f64, nll_term: f64, switching_term: f64) -> Self {
        Self {
            sparsity_term,
            nll_term,
            switching_term,
            total: sparsity_term + nll_term + switching_term,
        }
    }
}

/// `Σ_k ‖λ∘Θ_k‖₁` over assembled precisions.
pub fn sparsity_term(clusters: &[ClusterModel], lambda: &DMatrix<f64>) -> f64 {
    clusters
        .iter()
        .map(|c| lambda.component_mul(&c.theta.assemble().abs()).sum())
        .sum()
}

/// Objective from an already-built cost matrix. The first time step never
/// counts as a switch.
pub fn objective_from_costs(
    clusters: &[ClusterModel],
    assignment: &AssignmentPath,
    costs: &CostMatrix,
    lambda: &DMatrix<f64>,
    beta: f64,
) -> ObjectiveBreakdown {
    let nll: f64 = assignment
        .labels()
        .iter()
        .enumerate()
        .map(|(t, &l)| costs.get(t, l))
        .sum();
    ObjectiveBreakdown::new(
        sparsity_term(clusters, lambda),
        nll,
        beta * assignment.num_switches() as f64,
    )
}

pub fn objective_parts(
    subseq: &SubsequenceMatrix,
    clusters: &[ClusterModel],
    assignment: &AssignmentPath,
    lambda: &DMatrix<f64>,
    beta: f64,
) -> Result<ObjectiveBreakdown> {
    if assignment.len() != subseq.len() {
        return Err(TiccError::Dimension(format!(
            "assignment has {} labels for {} windows",
            assignment.len(),
            subseq.len()
        )));
    }
    if let Some(&l) = assignment.labels().iter().find(|&&l| l >= clusters.len()) {
        return Err(TiccError::Dimension(format!(
            "label {l} but only {} clusters",
            clusters.len()
        )));
    }
    let scorers = scorers_for(clusters)?;
    let nll: f64 = assignment
        .labels()
        .iter()
        .enumerate()
        .map(|(t, &l)| scorers[l].nll(subseq.row(t)))
        .sum();
    Ok(ObjectiveBreakdown::new(
        sparsity_term(clusters, lambda),
        nll,
        beta * assignment.num_switches() as f64,
    ))
}

/// Evaluate the clustering objective at a fitted model.
pub fn objective(
    subseq: &SubsequenceMatrix,
    model: &TiccModel,
    lambda: &Lambda,
    beta: f64,
) -> Result<ObjectiveBreakdown> {
    let lam = lambda.to_matrix(subseq.width())?;
    objective_parts(subseq, &model.clusters, &model.assignment, &lam, beta)
}

pub(crate) fn scorers_for(clusters: &[ClusterModel]) -> Result<Vec<GaussianScorer>> {
    clusters
        .iter()
        .map(|c| GaussianScorer::new(&c.theta, &c.mean()))
        .collect()
}
