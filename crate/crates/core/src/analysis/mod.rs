//! Analytical quantities of shuffling methods and validators for their
//! convergence bounds.

mod bounds;
mod constants;
mod lemmas;
mod stats;
mod variance;

pub use bounds::{check_bound, BoundCheck, BoundOptions, TheoremId};
pub use constants::{
    assumption2_constants, assumption2_from_grid, gradient_variance, recommended_stepsize, AssumptionConstants,
    ConstantsProvenance, StepsizeRecommendation, StepsizeRule,
};
pub use lemmas::{
    descent_check, epoch_deviations, forward_bound_check, recursion_check, tracking_errors, vt_bound_check,
    DescentRecord, Deviations, PairedCheck, Tracking,
};
pub use stats::{mean_ci, MeanCi, Z95};
pub use variance::{
    bregman, check_minimizer, limit_points, prop1_bounds, shuffle_variance_samples, sigma_shuffle_sq, sigma_star_sq,
    Estimation, LimitPoints, Sampling, VarianceReport,
};

use thiserror::Error;

use crate::optim::OptimError;
use crate::problem::ProblemError;
use crate::shuffle::ShuffleError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("point is not a minimizer: gradient norm {grad_norm:e} exceeds {tol:e}")]
    NotAMinimizer { grad_norm: f64, tol: f64 },
    #[error("Monte Carlo estimation needs at least 2 permutations, got {0}")]
    TooFewPermutations(usize),
    #[error("component infima unknown and no sampling grid supplied")]
    NoConstantsSource,
    #[error("inner iterates for epoch {epoch} were not fully recorded")]
    InnerIteratesMissing { epoch: usize },
    #[error("realized orderings were not recorded")]
    OrderingsMissing,
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Shuffle(#[from] ShuffleError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}
