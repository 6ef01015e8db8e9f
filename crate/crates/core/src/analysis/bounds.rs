//! Runtime validation of the convergence bounds against seed ensembles.

use std::fmt;

use crate::optim::{solve_reference, Trajectory};
use crate::problem::Problem;
use crate::shuffle::MethodKind;
use crate::vector::{mean_of, Vector};

use super::constants::{assumption2_from_grid, AssumptionConstants};
use super::lemmas::ensemble_gamma;
use super::stats::mean_ci;
use super::variance::{check_minimizer, sigma_shuffle_sq, sigma_star_sq_unchecked, Estimation};
use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TheoremId {
    /// RR/SO, strongly convex components: `E‖x_T − x*‖²`.
    Thm1,
    /// RR/SO, strongly convex `f`, convex components: `E‖x_T − x*‖²`.
    Thm2,
    /// RR/SO, convex components: `E[f(x̂_T) − f*]`.
    Thm3,
    /// RR, smooth nonconvex: `min_t E‖∇f(x_t)‖²`.
    Thm4Nc,
    /// RR under PL with `A = 0`: `E[f(x_T) − f*]`.
    Thm4Pl,
    IgSc,
    IgFsc,
    IgCvx,
    IgNc,
    /// SGD with replacement, strongly convex `f`.
    SgdSc,
}

impl TheoremId {
    pub const ALL: [TheoremId; 10] = [
        TheoremId::Thm1,
        TheoremId::Thm2,
        TheoremId::Thm3,
        TheoremId::Thm4Nc,
        TheoremId::Thm4Pl,
        TheoremId::IgSc,
        TheoremId::IgFsc,
        TheoremId::IgCvx,
        TheoremId::IgNc,
        TheoremId::SgdSc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TheoremId::Thm1 => "thm1",
            TheoremId::Thm2 => "thm2",
            TheoremId::Thm3 => "thm3",
            TheoremId::Thm4Nc => "thm4-nc",
            TheoremId::Thm4Pl => "thm4-pl",
            TheoremId::IgSc => "thm5-ig-sc",
            TheoremId::IgFsc => "thm5-ig-fsc",
            TheoremId::IgCvx => "thm5-ig-cvx",
            TheoremId::IgNc => "thm5-ig-nc",
            TheoremId::SgdSc => "sgd-sc",
        }
    }

    pub fn parse(s: &str) -> Option<TheoremId> {
        TheoremId::ALL.into_iter().find(|t| t.name() == s)
    }

    /// Methods the theorem is stated for.
    pub fn methods(self) -> &'static [MethodKind] {
        match self {
            TheoremId::Thm1 | TheoremId::Thm2 | TheoremId::Thm3 => &[MethodKind::Rr, MethodKind::So],
            TheoremId::Thm4Nc | TheoremId::Thm4Pl => &[MethodKind::Rr],
            TheoremId::IgSc | TheoremId::IgFsc | TheoremId::IgCvx | TheoremId::IgNc => &[MethodKind::Ig],
            TheoremId::SgdSc => &[MethodKind::SgdIid],
        }
    }

    fn is_ig(self) -> bool {
        self.methods() == [MethodKind::Ig]
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub theorem: TheoremId,
    pub gamma: f64,
    pub epochs: usize,
    pub rhs: f64,
    pub observed: f64,
    pub ci_halfwidth: f64,
    pub slack: f64,
    /// `observed ≤ rhs (1 + slack) + ci_halfwidth`
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundOptions {
    /// Relative slack on the right side; 0 by default.
    pub slack: f64,
    /// Minimizer; otherwise closed form or the reference solver.
    pub x_star: Option<Vector>,
    /// Optimal value for the nonconvex checks. Otherwise the smallest of the
    /// reference solver's value and every visited `f(x_t)`.
    pub f_star: Option<f64>,
    /// How the shuffling variance is computed for `thm1`.
    pub shuffle: Estimation,
    /// `(A, B²)` for the nonconvex checks. Defaults to `A = 0` with `B²` the
    /// largest gradient variance over the visited iterates.
    pub assumption: Option<AssumptionConstants>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            slack: 0.0,
            x_star: None,
            f_star: None,
            shuffle: Estimation::default(),
            assumption: None,
        }
    }
}

fn precondition(msg: String) -> AnalysisError {
    AnalysisError::Precondition(msg)
}

fn require_step(id: TheoremId, gamma: f64, limit: f64) -> Result<(), AnalysisError> {
    if gamma > 0.0 && gamma <= limit * (1.0 + 1e-12) {
        Ok(())
    } else {
        Err(precondition(format!("{id} needs 0 < γ ≤ {limit:e}, got {gamma:e}")))
    }
}

/// `x^{-1/3}` with the limb dropped at `x = 0`.
fn inv_cbrt(x: f64) -> f64 {
    if x == 0.0 {
        f64::INFINITY
    } else {
        x.cbrt().recip()
    }
}

/// Compares the ensemble statistic of the theorem's left side with its
/// closed-form right side. Refuses rather than passes when the step size,
/// problem class or method does not match the theorem.
pub fn check_bound<P: Problem + ?Sized>(
    id: TheoremId,
    problem: &P,
    ensemble: &[Trajectory],
    gamma: f64,
    options: &BoundOptions,
) -> Result<BoundCheck, AnalysisError> {
    if !(options.slack >= 0.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "slack must be nonnegative, got {}",
            options.slack
        )));
    }
    let min_size = if id.is_ig() { 1 } else { 2 };
    if ensemble.len() < min_size {
        return Err(if ensemble.is_empty() {
            AnalysisError::EmptyEnsemble
        } else {
            precondition(format!("{id} needs at least {min_size} runs"))
        });
    }
    let run_gamma = ensemble_gamma(ensemble)?;
    if run_gamma != gamma {
        return Err(precondition(format!(
            "runs used γ = {run_gamma:e}, check asked for {gamma:e}"
        )));
    }
    if let Some(tr) = ensemble.iter().find(|tr| !id.methods().contains(&tr.method)) {
        return Err(precondition(format!("{id} does not apply to method {}", tr.method)));
    }
    let n = problem.num_components();
    let first = &ensemble[0];
    let epochs = first.epochs();
    let x0 = &first.epoch_iterates[0];
    if ensemble
        .iter()
        .any(|tr| tr.steps_per_epoch != n || tr.epochs() != epochs || &tr.epoch_iterates[0] != x0)
    {
        return Err(precondition(
            "runs must share x0 and epoch count and step once per component".into(),
        ));
    }
    if epochs == 0 {
        return Err(precondition("runs have no epochs".into()));
    }
    let c = problem.constants();
    let (l, mu) = (c.l, c.mu);
    let nf = n as f64;
    let t = epochs as f64;
    let class = c.convexity;
    let class_err = |need: &str| precondition(format!("{id} needs {need}, problem is {}", class.name()));

    match id {
        TheoremId::Thm1 | TheoremId::IgSc => {
            if !class.each_strongly_convex() || mu <= 0.0 {
                return Err(class_err("strongly convex components"));
            }
            require_step(id, gamma, 1.0 / l)?;
        }
        TheoremId::Thm2 | TheoremId::IgFsc | TheoremId::SgdSc => {
            if !(class.f_strongly_convex() && class.each_convex()) || mu <= 0.0 {
                return Err(class_err("strongly convex f and convex components"));
            }
            let limit = match id {
                TheoremId::SgdSc => 1.0 / (2.0 * l),
                _ => 1.0 / (2f64.sqrt() * l * nf),
            };
            require_step(id, gamma, limit)?;
        }
        TheoremId::Thm3 | TheoremId::IgCvx => {
            if !class.each_convex() {
                return Err(class_err("convex components"));
            }
            require_step(id, gamma, 1.0 / (2f64.sqrt() * l * nf))?;
        }
        TheoremId::Thm4Nc | TheoremId::Thm4Pl | TheoremId::IgNc => {}
    }

    let mean_of_runs = |f: &dyn Fn(&Trajectory) -> f64| {
        let values: Vec<f64> = ensemble.iter().map(f).collect();
        mean_ci(&values)
    };

    let (rhs, stat) = match id {
        TheoremId::Thm4Nc | TheoremId::Thm4Pl | TheoremId::IgNc => {
            let visited: Vec<Vector> = ensemble
                .iter()
                .flat_map(|tr| tr.epoch_iterates.iter().cloned())
                .collect();
            let reference = match (&options.x_star, id) {
                (Some(x), _) => Some(x.clone()),
                (None, TheoremId::Thm4Pl) => Some(minimizer(problem, x0)?),
                _ => None,
            };
            let f_star = match (options.f_star, &reference) {
                (Some(f), _) => f,
                (None, Some(x)) => problem.value(x),
                (None, None) => {
                    let solved = solve_reference(problem, Some(x0), None)?.f_value;
                    visited.iter().map(|x| problem.value(x)).fold(solved, f64::min)
                }
            };
            let consts = match options.assumption {
                Some(a) => a,
                None => assumption2_from_grid(problem, &visited)?,
            };
            let (a, b_sq) = (consts.a, consts.b_sq);
            if !(a >= 0.0 && b_sq >= 0.0) {
                return Err(AnalysisError::InvalidParameter(format!(
                    "assumption constants must be nonnegative, got A = {a}, B² = {b_sq}"
                )));
            }
            let delta0 = problem.value(x0) - f_star;
            match id {
                TheoremId::Thm4Nc => {
                    let limit = (1.0 / (2.0 * l * nf)).min(inv_cbrt(a * l * l * nf * nf * t));
                    require_step(id, gamma, limit)?;
                    let rhs = 12.0 * delta0 / (gamma * nf * t) + 2.0 * gamma * gamma * l * l * nf * b_sq;
                    (rhs, min_grad_stat(problem, ensemble))
                }
                TheoremId::IgNc => {
                    let limit = (1.0 / (8f64.sqrt() * nf * l)).min(inv_cbrt(4.0 * l * l * nf.powi(3) * a * t));
                    require_step(id, gamma, limit)?;
                    let rhs = 12.0 * delta0 / (gamma * nf * t) + 8.0 * gamma * gamma * l * l * nf * nf * b_sq;
                    (rhs, min_grad_stat(problem, ensemble))
                }
                _ => {
                    if a != 0.0 {
                        return Err(precondition(format!("{id} needs A = 0, got A = {a}")));
                    }
                    let pl = c.pl_mu.filter(|&m| m > 0.0).ok_or_else(|| class_err("a PL constant"))?;
                    require_step(id, gamma, 1.0 / (2.0 * l * nf))?;
                    let kappa = l / pl;
                    let rhs = (1.0 - gamma * pl * nf / 2.0).powf(t) * delta0 + gamma * gamma * kappa * l * nf * b_sq;
                    let stat = mean_of_runs(&|tr| problem.value(tr.last()) - f_star);
                    (rhs, (stat.mean, stat.ci))
                }
            }
        }
        _ => {
            let x_star = match &options.x_star {
                Some(x) => x.clone(),
                None => minimizer(problem, x0)?,
            };
            check_minimizer(problem, &x_star)?;
            let r0 = x0.dist_sq(&x_star);
            let s2 = sigma_star_sq_unchecked(problem, &x_star);
            let kappa = if mu > 0.0 { l / mu } else { f64::INFINITY };
            let dist_stat = || mean_of_runs(&|tr| tr.last().dist_sq(&x_star));
            let avg_stat = || {
                let f_star = problem.value(&x_star);
                mean_of_runs(&|tr| problem.value(&mean_of(&tr.epoch_iterates[1..])) - f_star)
            };
            let (rhs, stat) = match id {
                TheoremId::Thm1 => {
                    let report = sigma_shuffle_sq(problem, &x_star, gamma, options.shuffle)?;
                    let rhs = (1.0 - gamma * mu).powf(nf * t) * r0 + 2.0 * gamma * report.upper() / mu;
                    (rhs, dist_stat())
                }
                TheoremId::Thm2 => (
                    (1.0 - gamma * mu * nf / 2.0).powf(t) * r0 + gamma * gamma * kappa * nf * s2,
                    dist_stat(),
                ),
                TheoremId::Thm3 => (
                    r0 / (2.0 * gamma * nf * t) + gamma * gamma * l * nf * s2 / 4.0,
                    avg_stat(),
                ),
                TheoremId::IgSc => (
                    (1.0 - gamma * mu).powf(nf * t) * r0 + gamma * gamma * l * nf * nf * s2 / mu,
                    dist_stat(),
                ),
                TheoremId::IgFsc => (
                    (1.0 - gamma * mu * nf / 2.0).powf(t) * r0 + 2.0 * gamma * gamma * kappa * nf * nf * s2,
                    dist_stat(),
                ),
                TheoremId::IgCvx => (
                    r0 / (2.0 * gamma * nf * t) + gamma * gamma * l * nf * nf * s2 / 2.0,
                    avg_stat(),
                ),
                TheoremId::SgdSc => (
                    (1.0 - gamma * mu).powf(nf * t) * r0 + 2.0 * gamma * s2 / mu,
                    dist_stat(),
                ),
                _ => unreachable!(),
            };
            (rhs, (stat.mean, stat.ci))
        }
    };
    let (observed, ci) = stat;
    // deterministic method: a single run is exact
    let ci = if id.is_ig() { 0.0 } else { ci };
    Ok(BoundCheck {
        theorem: id,
        gamma,
        epochs,
        rhs,
        observed,
        ci_halfwidth: ci,
        slack: options.slack,
        pass: observed <= rhs * (1.0 + options.slack) + ci,
    })
}

fn minimizer<P: Problem + ?Sized>(problem: &P, x0: &Vector) -> Result<Vector, AnalysisError> {
    Ok(solve_reference(problem, Some(x0), None)?.x)
}

/// `min_{t<T}` of the ensemble mean of `‖∇f(x_t)‖²`, with the CI at the argmin.
fn min_grad_stat<P: Problem + ?Sized>(problem: &P, ensemble: &[Trajectory]) -> (f64, f64) {
    let epochs = ensemble[0].epochs();
    (0..epochs)
        .map(|t| {
            let g: Vec<f64> = ensemble
                .iter()
                .map(|tr| problem.gradient(&tr.epoch_iterates[t]).norm_sq())
                .collect();
            let s = mean_ci(&g);
            (s.mean, s.ci)
        })
        .fold(
            (f64::INFINITY, 0.0),
            |best, cur| if cur.0 < best.0 { cur } else { best },
        )
}
