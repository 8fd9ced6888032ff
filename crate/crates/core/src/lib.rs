//! Simultaneous segmentation and clustering of multivariate time series.
//!
//! Each cluster is a Gaussian over a sliding window of `w` consecutive
//! observations whose precision matrix is sparse and block-Toeplitz. Fitting
//! alternates a dynamic-programming label assignment with a graphical lasso
//! solved by ADMM.

pub mod assign;
pub mod error;
pub mod exec;
pub mod glasso;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod ticc;
pub mod timeseries;
pub mod toeplitz;

pub use assign::{assign_dp, AssignmentPath, CostMatrix};
pub use error::{Result, TiccError};
pub use exec::Execution;
pub use glasso::{AdmmConfig, GlassoProblem, GlassoSolution};
pub use metrics::{macro_f1, network_f1, MatchResult, Scores};
pub use synth::GroundTruth;
pub use ticc::{fit, fit_with_diagnostics, ClusterModel, FitDiagnostics, Lambda, TiccConfig, TiccModel};
pub use timeseries::{stack_windows, SubsequenceMatrix, TimeSeries};
pub use toeplitz::BlockToeplitzMatrix;
