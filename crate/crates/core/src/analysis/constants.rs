use crate::problem::Problem;
use crate::vector::{dist_sq, Vector};

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantsProvenance {
    /// `A = L`, `B² = 2L(f* − mean f_i*)` from known component infima.
    Prop2Analytic,
    /// `A = 0` and `B²` the largest gradient variance seen on a finite set of
    /// points. Heuristic: valid only on the sampled region.
    GridEstimate,
}

impl ConstantsProvenance {
    pub fn name(self) -> &'static str {
        match self {
            ConstantsProvenance::Prop2Analytic => "prop2-analytic",
            ConstantsProvenance::GridEstimate => "grid-estimate",
        }
    }
}

/// Constants of the second-moment bound
/// `(1/n) Σ ‖∇f_i(x) − ∇f(x)‖² ≤ 2A (f(x) − f*) + B²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionConstants {
    pub a: f64,
    pub b_sq: f64,
    pub provenance: ConstantsProvenance,
}

/// `σ²(x) = (1/n) Σ ‖∇f_i(x) − ∇f(x)‖²`, by exact summation.
pub fn gradient_variance<P: Problem + ?Sized>(problem: &P, x: &[f64]) -> f64 {
    let n = problem.num_components();
    let full = problem.gradient(x);
    let mut g = vec![0.0; x.len()];
    let mut total = 0.0;
    for i in 0..n {
        problem.component_gradient_into(i, x, &mut g);
        total += dist_sq(&g, &full);
    }
    total / n as f64
}

/// Analytic constants when the component infima and `f*` are known,
/// otherwise a grid estimate over `grid`.
pub fn assumption2_constants<P: Problem + ?Sized>(
    problem: &P,
    f_star: Option<f64>,
    grid: Option<&[Vector]>,
) -> Result<AssumptionConstants, AnalysisError> {
    if let (Some(infima), Some(f_star)) = (problem.component_infima(), f_star) {
        let l = problem.constants().l;
        let mean_inf = infima.iter().sum::<f64>() / infima.len() as f64;
        // f* ≥ mean f_i* always; clamp rounding below zero
        let b_sq = (2.0 * l * (f_star - mean_inf)).max(0.0);
        return Ok(AssumptionConstants {
            a: l,
            b_sq,
            provenance: ConstantsProvenance::Prop2Analytic,
        });
    }
    match grid {
        Some(g) if !g.is_empty() => assumption2_from_grid(problem, g),
        _ => Err(AnalysisError::NoConstantsSource),
    }
}

/// `A = 0`, `B² = max_{x ∈ grid} σ²(x)`.
pub fn assumption2_from_grid<P: Problem + ?Sized>(
    problem: &P,
    grid: &[Vector],
) -> Result<AssumptionConstants, AnalysisError> {
    if grid.is_empty() {
        return Err(AnalysisError::NoConstantsSource);
    }
    let b_sq = grid.iter().map(|x| gradient_variance(problem, x)).fold(0.0, f64::max);
    Ok(AssumptionConstants {
        a: 0.0,
        b_sq,
        provenance: ConstantsProvenance::GridEstimate,
    })
}

/// Inputs of the step-size recommendations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepsizeRule {
    /// Strongly convex components, final-iterate distance.
    StronglyConvex {
        l: f64,
        mu: f64,
        n: usize,
        epochs: usize,
        /// `‖x0 − x*‖`
        dist0: f64,
        /// `σ*`
        sigma_star: f64,
    },
    /// Convex components, averaged iterate.
    Convex {
        l: f64,
        n: usize,
        epochs: usize,
        dist0: f64,
        sigma_star: f64,
    },
    /// Nonconvex, target gradient norm `eps`.
    Nonconvex {
        l: f64,
        a: f64,
        b: f64,
        n: usize,
        epochs: usize,
        eps: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepsizeRecommendation {
    pub gamma: f64,
    /// The logarithmic limb was undefined and `1/L` was used instead.
    pub fallback: bool,
}

/// Closed-form step sizes that balance the terms of each bound.
pub fn recommended_stepsize(rule: StepsizeRule) -> Result<StepsizeRecommendation, AnalysisError> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(AnalysisError::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            )))
        }
    };
    let nonneg = |name: &str, v: f64| {
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(AnalysisError::InvalidParameter(format!(
                "{name} must be nonnegative, got {v}"
            )))
        }
    };
    match rule {
        StepsizeRule::StronglyConvex {
            l,
            mu,
            n,
            epochs,
            dist0,
            sigma_star,
        } => {
            positive("L", l)?;
            positive("mu", mu)?;
            nonneg("distance", dist0)?;
            nonneg("sigma_star", sigma_star)?;
            let (n, t) = (n as f64, epochs as f64);
            let kappa = l / mu;
            let arg = dist0 * mu * t * n.sqrt() / (kappa.sqrt() * sigma_star);
            if !(arg > 1.0) || !arg.is_finite() || n * t == 0.0 {
                return Ok(StepsizeRecommendation {
                    gamma: 1.0 / l,
                    fallback: true,
                });
            }
            Ok(StepsizeRecommendation {
                gamma: (1.0 / l).min(2.0 / (mu * n * t) * arg.ln()),
                fallback: false,
            })
        }
        StepsizeRule::Convex {
            l,
            n,
            epochs,
            dist0,
            sigma_star,
        } => {
            positive("L", l)?;
            positive("distance", dist0)?;
            nonneg("sigma_star", sigma_star)?;
            let (n, t) = (n as f64, epochs as f64);
            let first = 1.0 / (2f64.sqrt() * l * n);
            let second = if sigma_star == 0.0 {
                f64::INFINITY
            } else {
                (dist0 * dist0 / (l * n * n * t * sigma_star * sigma_star)).cbrt()
            };
            Ok(StepsizeRecommendation {
                gamma: first.min(second),
                fallback: false,
            })
        }
        StepsizeRule::Nonconvex {
            l,
            a,
            b,
            n,
            epochs,
            eps,
        } => {
            positive("L", l)?;
            nonneg("A", a)?;
            nonneg("B", b)?;
            positive("eps", eps)?;
            let (n, t) = (n as f64, epochs as f64);
            let first = 1.0 / (2.0 * l * n);
            let second = if a == 0.0 {
                f64::INFINITY
            } else {
                1.0 / (a.cbrt() * l.powf(2.0 / 3.0) * n.powf(2.0 / 3.0) * t.cbrt())
            };
            let third = if b == 0.0 {
                f64::INFINITY
            } else {
                eps / (2.0 * l * n.sqrt() * b)
            };
            Ok(StepsizeRecommendation {
                gamma: first.min(second).min(third),
                fallback: false,
            })
        }
    }
}
