//! Random reshuffling, shuffle-once, incremental gradient and SGD on finite
//! sums `f(x) = (1/n) Σ f_i(x)`, together with the quantities that govern
//! their convergence (shuffling variance, limit points, per-epoch deviations)
//! and validators that check convergence bounds against seed ensembles.
//!
//! ```
//! use reshuffle::analysis::{check_bound, BoundOptions, TheoremId};
//! use reshuffle::optim::{run_ensemble, RunConfig, StepSchedule};
//! use reshuffle::problem::{Quadratic, QuadraticSpec};
//! use reshuffle::{MethodKind, Vector};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let q = Quadratic::new(QuadraticSpec::scalar(&[0.0, 3.0, 6.0]))?;
//! let config = RunConfig::new(MethodKind::Rr, StepSchedule::constant(0.1)?, 30, Vector::scalar(10.0));
//! let runs = run_ensemble(&config, &q, &(0..2000).collect::<Vec<u64>>())?;
//! let check = check_bound(TheoremId::Thm1, &q, &runs, 0.1, &BoundOptions::default())?;
//! assert!(check.pass);
//! # Ok(())
//! # }
//! ```

pub mod analysis;
pub mod data;
pub mod optim;
pub mod problem;
pub mod shuffle;
pub mod vector;

pub use problem::{ConvexityClass, Problem, ProblemConstants, ProblemError};
pub use shuffle::{MethodKind, OrderingScheme, Permutation};
pub use vector::Vector;
