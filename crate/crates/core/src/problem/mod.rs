//! Finite-sum problem oracles `f(x) = (1/n) Σ f_i(x)`.
//!
//! Every oracle exposes per-component values and gradients together with the
//! smoothness and convexity constants the convergence bounds are stated in.
//! Oracles are immutable after construction and can be shared across worker
//! threads.

mod generic;
mod grouped;
mod logistic;
mod quadratic;
mod wavy;

pub use generic::{FnProblem, GradientFn, ValueFn};
pub use grouped::Grouped;
pub use logistic::{sigmoid, Logistic, LogisticSpec, SpectralNormError};
pub use quadratic::{Quadratic, QuadraticSpec};
pub use wavy::Wavy;

use thiserror::Error;

use crate::vector::Vector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("problem needs at least one component")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("component index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid label {label} in sample {sample}; labels must be 0 or 1")]
    InvalidLabel { sample: usize, label: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    SpectralNorm(#[from] SpectralNormError),
}

/// Which structural assumption the components satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvexityClass {
    /// Every `f_i` is `mu`-strongly convex.
    EachStronglyConvex,
    /// `f` is `mu`-strongly convex, each `f_i` convex.
    FStronglyConvex,
    /// Every `f_i` convex.
    Convex,
    /// `f` satisfies the Polyak-Łojasiewicz inequality with `pl_mu`.
    Pl,
    Nonconvex,
}

impl ConvexityClass {
    pub fn each_strongly_convex(self) -> bool {
        self == ConvexityClass::EachStronglyConvex
    }

    pub fn f_strongly_convex(self) -> bool {
        matches!(
            self,
            ConvexityClass::EachStronglyConvex | ConvexityClass::FStronglyConvex
        )
    }

    pub fn each_convex(self) -> bool {
        matches!(
            self,
            ConvexityClass::EachStronglyConvex | ConvexityClass::FStronglyConvex | ConvexityClass::Convex
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ConvexityClass::EachStronglyConvex => "each-strongly-convex",
            ConvexityClass::FStronglyConvex => "f-strongly-convex",
            ConvexityClass::Convex => "convex",
            ConvexityClass::Pl => "pl",
            ConvexityClass::Nonconvex => "nonconvex",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    /// Smoothness constant shared by `f` and every component.
    pub l: f64,
    /// Strong convexity constant; 0 when not strongly convex.
    pub mu: f64,
    pub convexity: ConvexityClass,
    pub pl_mu: Option<f64>,
}

impl ProblemConstants {
    pub fn new(l: f64, mu: f64, convexity: ConvexityClass) -> Result<Self, ProblemError> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(ProblemError::InvalidParameter(format!(
                "smoothness constant must be positive, got {l}"
            )));
        }
        if !(mu >= 0.0) || mu > l {
            return Err(ProblemError::InvalidParameter(format!(
                "strong convexity {mu} must lie in [0, L = {l}]"
            )));
        }
        let pl_mu = if convexity.f_strongly_convex() && mu > 0.0 {
            Some(mu)
        } else {
            None
        };
        Ok(ProblemConstants {
            l,
            mu,
            convexity,
            pl_mu,
        })
    }

    pub fn with_pl(mut self, pl_mu: f64) -> Self {
        self.pl_mu = Some(pl_mu);
        if !self.convexity.f_strongly_convex() && !self.convexity.each_convex() {
            self.convexity = ConvexityClass::Pl;
        }
        self
    }

    /// `L / mu`, defined only for `mu > 0`.
    pub fn kappa(&self) -> Option<f64> {
        (self.mu > 0.0).then(|| self.l / self.mu)
    }
}

/// A finite sum of `n` smooth components on `R^d`.
///
/// The component methods do not bounds-check `i`; use the free functions in
/// this module for checked access.
pub trait Problem: Send + Sync {
    fn num_components(&self) -> usize;

    fn dim(&self) -> usize;

    fn component_value(&self, i: usize, x: &[f64]) -> f64;

    /// Writes `∇f_i(x)` into `out` (overwriting it).
    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]);

    fn constants(&self) -> ProblemConstants;

    /// Lower bounds `f_i*` of the components, when known.
    fn component_infima(&self) -> Option<Vec<f64>> {
        None
    }

    /// Exact minimizer of `f` when available without iteration.
    fn closed_form_minimizer(&self) -> Option<Vector> {
        None
    }

    fn component_gradient(&self, i: usize, x: &[f64]) -> Vector {
        let mut out = Vector::zeros(self.dim());
        self.component_gradient_into(i, x, &mut out);
        out
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.num_components();
        (0..n).map(|i| self.component_value(i, x)).sum::<f64>() / n as f64
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.num_components();
        let mut buf = vec![0.0; self.dim()];
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            self.component_gradient_into(i, x, &mut buf);
            for (o, g) in out.iter_mut().zip(&buf) {
                *o += g;
            }
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|v| *v *= inv);
    }

    fn gradient(&self, x: &[f64]) -> Vector {
        let mut out = Vector::zeros(self.dim());
        self.gradient_into(x, &mut out);
        out
    }

    /// Mean of component gradients over `indices`.
    fn batch_gradient_into(&self, indices: &[usize], x: &[f64], out: &mut [f64]) {
        let mut buf = vec![0.0; self.dim()];
        out.iter_mut().for_each(|v| *v = 0.0);
        for &i in indices {
            self.component_gradient_into(i, x, &mut buf);
            for (o, g) in out.iter_mut().zip(&buf) {
                *o += g;
            }
        }
        let inv = 1.0 / indices.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv);
    }

    fn batch_value(&self, indices: &[usize], x: &[f64]) -> f64 {
        indices.iter().map(|&i| self.component_value(i, x)).sum::<f64>() / indices.len() as f64
    }
}

fn check_point<P: Problem + ?Sized>(problem: &P, x: &[f64]) -> Result<(), ProblemError> {
    if x.len() != problem.dim() {
        return Err(ProblemError::DimensionMismatch {
            expected: problem.dim(),
            found: x.len(),
        });
    }
    Ok(())
}

fn check_index<P: Problem + ?Sized>(problem: &P, i: usize) -> Result<(), ProblemError> {
    let n = problem.num_components();
    if i >= n {
        return Err(ProblemError::IndexOutOfRange { index: i, n });
    }
    Ok(())
}

pub fn objective<P: Problem + ?Sized>(problem: &P, x: &[f64]) -> Result<f64, ProblemError> {
    check_point(problem, x)?;
    Ok(problem.value(x))
}

pub fn gradient<P: Problem + ?Sized>(problem: &P, x: &[f64]) -> Result<Vector, ProblemError> {
    check_point(problem, x)?;
    Ok(problem.gradient(x))
}

pub fn component_value<P: Problem + ?Sized>(problem: &P, i: usize, x: &[f64]) -> Result<f64, ProblemError> {
    check_index(problem, i)?;
    check_point(problem, x)?;
    Ok(problem.component_value(i, x))
}

pub fn component_gradient<P: Problem + ?Sized>(problem: &P, i: usize, x: &[f64]) -> Result<Vector, ProblemError> {
    check_index(problem, i)?;
    check_point(problem, x)?;
    Ok(problem.component_gradient(i, x))
}

/// Constants valid for both `f` and every component.
pub fn smoothness_constants<P: Problem + ?Sized>(problem: &P) -> ProblemConstants {
    problem.constants()
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_point(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    /// Central finite-difference check of every component gradient.
    pub fn assert_gradients_match_fd<P: Problem>(problem: &P, trials: usize, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let d = problem.dim();
        for _ in 0..trials {
            let x = random_point(&mut rng, d, scale);
            let h = 1e-6 * (1.0 + crate::vector::norm_sq(&x).sqrt());
            for i in 0..problem.num_components() {
                let g = problem.component_gradient(i, &x);
                let mut fd = vec![0.0; d];
                for j in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    fd[j] = (problem.component_value(i, &xp) - problem.component_value(i, &xm)) / (2.0 * h);
                }
                let err = crate::vector::dist_sq(&g, &fd).sqrt();
                let scale = g.norm().max(1e-3);
                assert!(err / scale <= 1e-5, "component {i}: fd error {err} vs |g| {}", g.norm());
            }
        }
    }

    /// Gradient equals the explicit average of component gradients.
    pub fn assert_mean_consistency<P: Problem>(problem: &P, trials: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = problem.num_components();
        for _ in 0..trials {
            let x = random_point(&mut rng, problem.dim(), 3.0);
            let full = problem.gradient(&x);
            let mut manual = Vector::zeros(problem.dim());
            for i in 0..n {
                manual.axpy(1.0, &problem.component_gradient(i, &x));
            }
            manual.scale(1.0 / n as f64);
            let err = full.dist_sq(&manual).sqrt();
            assert!(err <= 1e-12 * (1.0 + manual.norm()), "mean mismatch {err}");
            let value: f64 = (0..n).map(|i| problem.component_value(i, &x)).sum::<f64>() / n as f64;
            assert!((problem.value(&x) - value).abs() <= 1e-12 * (1.0 + value.abs()));
        }
    }

    /// Lipschitz witness `‖∇f_i(x) − ∇f_i(y)‖ ≤ L‖x − y‖`.
    pub fn assert_lipschitz<P: Problem>(problem: &P, pairs: usize, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let l = problem.constants().l;
        for _ in 0..pairs {
            let x = random_point(&mut rng, problem.dim(), scale);
            let y = random_point(&mut rng, problem.dim(), scale);
            let i = rng.gen_range(0..problem.num_components());
            let gx = problem.component_gradient(i, &x);
            let gy = problem.component_gradient(i, &y);
            let lhs = gx.dist_sq(&gy).sqrt();
            let rhs = l * crate::vector::dist_sq(&x, &y).sqrt() * (1.0 + 1e-9);
            assert!(lhs <= rhs, "Lipschitz witness failed: {lhs} > {rhs}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checked_access_reports_errors() {
        let q = Quadratic::new(QuadraticSpec::uniform(vec![Vector::scalar(0.0), Vector::scalar(2.0)])).unwrap();
        assert_eq!(
            component_gradient(&q, 2, &[0.0]),
            Err(ProblemError::IndexOutOfRange { index: 2, n: 2 })
        );
        assert_eq!(
            objective(&q, &[0.0, 1.0]),
            Err(ProblemError::DimensionMismatch { expected: 1, found: 2 })
        );
        assert_eq!(gradient(&q, &[0.0]).unwrap().as_slice(), &[-1.0]);
    }

    #[test]
    fn constants_validation() {
        assert!(ProblemConstants::new(1.0, 2.0, ConvexityClass::EachStronglyConvex).is_err());
        assert!(ProblemConstants::new(0.0, 0.0, ConvexityClass::Convex).is_err());
        let c = ProblemConstants::new(4.0, 2.0, ConvexityClass::EachStronglyConvex).unwrap();
        assert_eq!(c.kappa(), Some(2.0));
        assert_eq!(c.pl_mu, Some(2.0));
        let c = ProblemConstants::new(4.0, 0.0, ConvexityClass::Nonconvex).unwrap();
        assert_eq!(c.kappa(), None);
    }
}
