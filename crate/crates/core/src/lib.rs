//! Structure learning for linear Gaussian Bayesian networks from
//! interventional data whose nodes are measured with additive error.
//!
//! The observed matrix is W = X + U with known error covariance Σ_u. Three
//! estimators are provided: pairwise coordinate descent on a corrected-score
//! objective ([`estimators::fit_pcd_corrected`]), the same on the naive
//! likelihood that ignores U ([`estimators::fit_pcd_naive`]), and node-wise
//! penalized corrected score equations ([`estimators::fit_nps`]). All of them
//! return coefficient matrices whose graphs are acyclic.

pub mod cli;
pub mod dag;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod penalty;
pub mod score;
pub mod simgen;
pub mod tuning;

pub use dag::DirectedGraph;
pub use error::{CsbnError, Result};
pub use estimators::{fit, EstimatorConfig, FitResult, Method};
pub use metrics::GraphEval;
pub use model::{CoefMatrix, DataSet, ErrorSpec, PenaltyParams};
