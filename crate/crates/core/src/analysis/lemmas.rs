//! Per-epoch deviations and runtime checks of the intermediate inequalities
//! behind the convergence bounds.

use std::ops::Range;

use crate::optim::Trajectory;
use crate::problem::Problem;
use crate::shuffle::MethodKind;
use crate::vector::{dist_sq, Vector};

use super::constants::gradient_variance;
use super::stats::{mean_ci, MeanCi};
use super::variance::{bregman, check_minimizer, limit_points_unchecked, sigma_star_sq_unchecked};
use super::AnalysisError;

/// Relative slack for pointwise (deterministic) inequality checks.
pub const POINTWISE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviations {
    /// `V_t = Σ_{i=1}^{n} ‖x_t^i − x_t‖²`.
    pub backward: f64,
    /// `Σ_{i=0}^{n−1} ‖x_t^i − x_t‖²`, the sum bounded in expectation for RR.
    pub backward_head: f64,
    /// `𝒱_t = Σ_{i=0}^{n−1} ‖x_t^i − x_{t+1}‖²`.
    pub forward: f64,
}

fn epoch_points(tr: &Trajectory, t: usize) -> Result<Vec<&Vector>, AnalysisError> {
    tr.full_epoch(t).ok_or(AnalysisError::InnerIteratesMissing { epoch: t })
}

pub fn epoch_deviations(tr: &Trajectory, t: usize) -> Result<Deviations, AnalysisError> {
    let pts = epoch_points(tr, t)?;
    let n = pts.len() - 1;
    let start = pts[0];
    let end = pts[n];
    let backward = pts[1..].iter().map(|x| x.dist_sq(start)).sum();
    let backward_head = pts[..n].iter().map(|x| x.dist_sq(start)).sum();
    let forward = pts[..n].iter().map(|x| x.dist_sq(end)).sum();
    Ok(Deviations {
        backward,
        backward_head,
        forward,
    })
}

/// The constant step shared by every trajectory of an ensemble.
pub(crate) fn ensemble_gamma(ensemble: &[Trajectory]) -> Result<f64, AnalysisError> {
    let first = ensemble.first().ok_or(AnalysisError::EmptyEnsemble)?;
    let gamma = first
        .schedule
        .constant_gamma()
        .ok_or_else(|| AnalysisError::Precondition("bounds apply to constant step sizes only".into()))?;
    if ensemble.iter().any(|tr| tr.schedule.constant_gamma() != Some(gamma)) {
        return Err(AnalysisError::Precondition(
            "trajectories use different step sizes".into(),
        ));
    }
    Ok(gamma)
}

fn require_methods(ensemble: &[Trajectory], allowed: &[MethodKind], what: &str) -> Result<(), AnalysisError> {
    match ensemble.iter().find(|tr| !allowed.contains(&tr.method)) {
        Some(tr) => Err(AnalysisError::Precondition(format!(
            "{what} does not apply to method {}",
            tr.method
        ))),
        None => Ok(()),
    }
}

fn require_step(gamma: f64, limit: f64, what: &str) -> Result<(), AnalysisError> {
    // allow the limit itself to be hit up to rounding
    if gamma <= limit * (1.0 + 1e-12) {
        Ok(())
    } else {
        Err(AnalysisError::Precondition(format!(
            "{what} needs step size ≤ {limit:e}, got {gamma:e}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentRecord {
    pub epoch: usize,
    /// `f(x_{t+1})`
    pub lhs: f64,
    /// `f(x_t) − (γn/2)‖∇f(x_t)‖² + (γL²/2) V_t`
    pub rhs: f64,
    pub violated: bool,
}

/// Checks `f(x_{t+1}) ≤ f(x_t) − (γn/2)‖∇f(x_t)‖² + (γL²/2) V_t` on every
/// epoch of one recorded run. Needs `γ ≤ 1/(Ln)`.
pub fn descent_check<P: Problem + ?Sized>(problem: &P, tr: &Trajectory) -> Result<Vec<DescentRecord>, AnalysisError> {
    let gamma = ensemble_gamma(std::slice::from_ref(tr))?;
    require_methods(
        std::slice::from_ref(tr),
        &[MethodKind::Rr, MethodKind::So, MethodKind::Ig],
        "the epoch descent inequality",
    )?;
    let n = tr.steps_per_epoch as f64;
    let l = problem.constants().l;
    require_step(gamma, 1.0 / (l * n), "the epoch descent inequality")?;
    (0..tr.epochs())
        .map(|t| {
            let v = epoch_deviations(tr, t)?.backward;
            let x = &tr.epoch_iterates[t];
            let f0 = problem.value(x);
            let g2 = problem.gradient(x).norm_sq();
            let lhs = problem.value(&tr.epoch_iterates[t + 1]);
            let descent = 0.5 * gamma * n * g2;
            let penalty = 0.5 * gamma * l * l * v;
            let rhs = f0 - descent + penalty;
            let scale = f0.abs() + descent + penalty + lhs.abs();
            Ok(DescentRecord {
                epoch: t,
                lhs,
                rhs,
                violated: lhs > rhs + POINTWISE_SLACK * scale,
            })
        })
        .collect()
}

/// Ensemble comparison of a random left side with a (possibly random) right
/// side through per-run paired differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedCheck {
    pub lhs: MeanCi,
    pub rhs: MeanCi,
    /// `lhs − rhs` per run.
    pub diff: MeanCi,
    /// `mean(lhs − rhs) ≤ CI(lhs − rhs)`.
    pub pass: bool,
}

fn paired(lhs: Vec<f64>, rhs: Vec<f64>) -> PairedCheck {
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let diff = mean_ci(&diff);
    let scale = mean_ci(&lhs).mean.abs() + mean_ci(&rhs).mean.abs();
    PairedCheck {
        lhs: mean_ci(&lhs),
        rhs: mean_ci(&rhs),
        pass: diff.mean <= diff.ci + POINTWISE_SLACK * scale,
        diff,
    }
}

/// `E[V_t] ≤ γ²n³ ‖∇f(x_t)‖² + γ²n² σ_t²` for RR with `γ ≤ 1/(2Ln)`, where the
/// deviation sums `i = 0..n−1`.
pub fn vt_bound_check<P: Problem + ?Sized>(
    problem: &P,
    ensemble: &[Trajectory],
    t: usize,
) -> Result<PairedCheck, AnalysisError> {
    let gamma = ensemble_gamma(ensemble)?;
    require_methods(ensemble, &[MethodKind::Rr], "the deviation bound")?;
    let n = ensemble[0].steps_per_epoch as f64;
    require_step(gamma, 1.0 / (2.0 * problem.constants().l * n), "the deviation bound")?;
    let mut lhs = Vec::with_capacity(ensemble.len());
    let mut rhs = Vec::with_capacity(ensemble.len());
    for tr in ensemble {
        lhs.push(epoch_deviations(tr, t)?.backward_head);
        let x = &tr.epoch_iterates[t];
        let g2 = problem.gradient(x).norm_sq();
        rhs.push(gamma * gamma * (n.powi(3) * g2 + n * n * gradient_variance(problem, x)));
    }
    Ok(paired(lhs, rhs))
}

fn epoch_ordering(tr: &Trajectory, t: usize) -> Result<&[usize], AnalysisError> {
    tr.orderings
        .as_ref()
        .and_then(|o| o.get(t))
        .map(|o| o.as_slice())
        .ok_or(AnalysisError::OrderingsMissing)
}

/// `E[𝒱_t] ≤ 4γ²n²L Σ_i E[D_{f_{π_i}}(x*, x_t^i)] + γ²n²σ*²/2` for RR/SO on
/// convex components with `γ ≤ 1/(√2 L n)`.
pub fn forward_bound_check<P: Problem + ?Sized>(
    problem: &P,
    ensemble: &[Trajectory],
    t: usize,
    x_star: &Vector,
) -> Result<PairedCheck, AnalysisError> {
    let gamma = ensemble_gamma(ensemble)?;
    require_methods(
        ensemble,
        &[MethodKind::Rr, MethodKind::So],
        "the forward deviation bound",
    )?;
    check_minimizer(problem, x_star)?;
    let c = problem.constants();
    if !c.convexity.each_convex() {
        return Err(AnalysisError::Precondition(
            "the forward deviation bound needs convex components".into(),
        ));
    }
    let n = ensemble[0].steps_per_epoch;
    if n < 2 {
        return Err(AnalysisError::Precondition(
            "the forward deviation bound needs n ≥ 2".into(),
        ));
    }
    let nf = n as f64;
    require_step(gamma, 1.0 / (2f64.sqrt() * c.l * nf), "the forward deviation bound")?;
    let s2 = sigma_star_sq_unchecked(problem, x_star);
    let mut lhs = Vec::with_capacity(ensemble.len());
    let mut rhs = Vec::with_capacity(ensemble.len());
    for tr in ensemble {
        lhs.push(epoch_deviations(tr, t)?.forward);
        let pts = epoch_points(tr, t)?;
        let pi = epoch_ordering(tr, t)?;
        let d: f64 = (0..n).map(|i| bregman(problem, pi[i], x_star, pts[i])).sum();
        rhs.push(4.0 * gamma * gamma * nf * nf * c.l * d + 0.5 * gamma * gamma * nf * nf * s2);
    }
    Ok(paired(lhs, rhs))
}

/// One inner step of the limit-point recursion:
/// `E‖x^{i+1} − x*^{i+1}‖² ≤ (1 − γμ) E‖x^i − x*^i‖² + 2γ²σ²_Shuffle`, for RR/SO
/// on strongly convex components with `γ ≤ 1/L`.
pub fn recursion_check<P: Problem + ?Sized>(
    problem: &P,
    ensemble: &[Trajectory],
    t: usize,
    i: usize,
    x_star: &Vector,
    sigma_shuffle_sq: f64,
) -> Result<PairedCheck, AnalysisError> {
    let gamma = ensemble_gamma(ensemble)?;
    require_methods(ensemble, &[MethodKind::Rr, MethodKind::So], "the limit-point recursion")?;
    check_minimizer(problem, x_star)?;
    let c = problem.constants();
    if !c.convexity.each_strongly_convex() {
        return Err(AnalysisError::Precondition(
            "the limit-point recursion needs strongly convex components".into(),
        ));
    }
    require_step(gamma, 1.0 / c.l, "the limit-point recursion")?;
    let n = ensemble[0].steps_per_epoch;
    if i >= n {
        return Err(AnalysisError::InvalidParameter(format!(
            "inner step {i} out of range for n = {n}"
        )));
    }
    let mut lhs = Vec::with_capacity(ensemble.len());
    let mut rhs = Vec::with_capacity(ensemble.len());
    for tr in ensemble {
        let pts = epoch_points(tr, t)?;
        let lp = limit_points_unchecked(problem, x_star, gamma, epoch_ordering(tr, t)?);
        let before = pts[i].dist_sq(lp.point(i));
        let after = pts[i + 1].dist_sq(lp.point(i + 1));
        lhs.push(after);
        rhs.push((1.0 - gamma * c.mu) * before + 2.0 * gamma * gamma * sigma_shuffle_sq);
    }
    Ok(paired(lhs, rhs))
}

/// Distances of the inner iterate `x_t^i` to its limit point and to `x*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tracking {
    /// `‖x_t^i − x*^i(π_t)‖²`, averaged over the epoch range per run.
    pub to_limit_point: MeanCi,
    /// `‖x_t^i − x*‖²`, same averaging.
    pub to_optimum: MeanCi,
    /// Per-run `to_optimum − to_limit_point`.
    pub gap: MeanCi,
}

pub fn tracking_errors<P: Problem + ?Sized>(
    problem: &P,
    ensemble: &[Trajectory],
    x_star: &Vector,
    epochs: Range<usize>,
    i: usize,
) -> Result<Tracking, AnalysisError> {
    let gamma = ensemble_gamma(ensemble)?;
    check_minimizer(problem, x_star)?;
    if epochs.is_empty() {
        return Err(AnalysisError::InvalidParameter("empty epoch range".into()));
    }
    let mut to_lp = Vec::with_capacity(ensemble.len());
    let mut to_opt = Vec::with_capacity(ensemble.len());
    for tr in ensemble {
        let (mut a, mut b) = (0.0, 0.0);
        for t in epochs.clone() {
            let pts = epoch_points(tr, t)?;
            if i > pts.len() - 1 {
                return Err(AnalysisError::InvalidParameter(format!("inner step {i} out of range")));
            }
            let lp = limit_points_unchecked(problem, x_star, gamma, epoch_ordering(tr, t)?);
            a += dist_sq(pts[i], lp.point(i));
            b += dist_sq(pts[i], x_star);
        }
        let k = epochs.len() as f64;
        to_lp.push(a / k);
        to_opt.push(b / k);
    }
    let gap: Vec<f64> = to_opt.iter().zip(&to_lp).map(|(b, a)| b - a).collect();
    Ok(Tracking {
        to_limit_point: mean_ci(&to_lp),
        to_optimum: mean_ci(&to_opt),
        gap: mean_ci(&gap),
    })
}
