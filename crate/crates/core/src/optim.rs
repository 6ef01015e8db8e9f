//! Epoch runners for RR, SO, IG and SGD, step-size schedules, trajectory
//! recording and the reference solver used to locate `x*`.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{group_minibatches, DataError};
use crate::problem::{Problem, ProblemError};
use crate::shuffle::{
    epoch_ordering, sample_permutation, shuffle_once_rng, stream_rng, MethodKind, OrderingScheme, Permutation,
    ShuffleError,
};
use crate::vector::{norm_sq, Vector};

/// Default numerator of the capped-inverse schedule for RR, SO and IG.
pub const SHUFFLED_NUMERATOR: f64 = 3.0;
/// Default numerator of the capped-inverse schedule for SGD.
pub const SGD_NUMERATOR: f64 = 2.0;
/// Gradient-evaluation budget of [`solve_reference`].
pub const REFERENCE_EVALUATION_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("iterate became non-finite at global step {step} (epoch {epoch}, inner step {inner})")]
    Divergence { step: u64, epoch: u64, inner: usize },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("reference solver stopped after {evaluations} gradient evaluations with gradient norm {grad_norm:e} (target {tol:e})")]
    IterationCap {
        evaluations: usize,
        grad_norm: f64,
        tol: f64,
    },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Shuffle(#[from] ShuffleError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant {
        gamma: f64,
    },
    /// `γ_k = min{1/L, c / (μ max{1, k − k0})}`.
    CappedInverse {
        l: f64,
        mu: f64,
        k0: u64,
        c: f64,
    },
}

impl StepSchedule {
    /// A constant step. Zero is accepted and freezes the iterate.
    pub fn constant(gamma: f64) -> Result<Self, OptimError> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(OptimError::InvalidConfig(format!(
                "step size must be finite and nonnegative, got {gamma}"
            )));
        }
        Ok(StepSchedule::Constant { gamma })
    }

    pub fn capped_inverse(l: f64, mu: f64, k0: u64, c: f64) -> Result<Self, OptimError> {
        if !(l > 0.0 && mu > 0.0 && c > 0.0 && l.is_finite() && mu.is_finite() && c.is_finite()) {
            return Err(OptimError::InvalidConfig(format!(
                "capped-inverse schedule needs positive finite L, mu, c (got {l}, {mu}, {c})"
            )));
        }
        Ok(StepSchedule::CappedInverse { l, mu, k0, c })
    }

    /// The constant step size, or `None` for a varying schedule.
    pub fn constant_gamma(&self) -> Option<f64> {
        match *self {
            StepSchedule::Constant { gamma } => Some(gamma),
            StepSchedule::CappedInverse { .. } => None,
        }
    }

    pub fn at(&self, k: u64) -> f64 {
        step_size(self, k)
    }
}

pub fn step_size(schedule: &StepSchedule, k: u64) -> f64 {
    match *schedule {
        StepSchedule::Constant { gamma } => gamma,
        StepSchedule::CappedInverse { l, mu, k0, c } => {
            let denom = mu * (k.saturating_sub(k0).max(1)) as f64;
            (1.0 / l).min(c / denom)
        }
    }
}

/// `⌊K/40⌋` for a budget of `K` total steps.
pub fn default_k0(total_steps: u64) -> u64 {
    total_steps / 40
}

/// Receives inner iterates `x^{i}` for `i = 1..=n` as an epoch proceeds.
pub trait Recorder {
    fn record(&mut self, inner: usize, x: &[f64]);
}

/// Discards everything.
pub struct NoRecord;

impl Recorder for NoRecord {
    fn record(&mut self, _inner: usize, _x: &[f64]) {}
}

impl Recorder for Vec<Vector> {
    fn record(&mut self, _inner: usize, x: &[f64]) {
        self.push(Vector::from(x));
    }
}

/// Keeps every `every`-th inner iterate together with its position.
struct Thinned<'a> {
    every: usize,
    out: &'a mut Vec<InnerRecord>,
}

impl Recorder for Thinned<'_> {
    fn record(&mut self, inner: usize, x: &[f64]) {
        if inner.is_multiple_of(self.every) {
            self.out.push(InnerRecord {
                inner,
                x: Vector::from(x),
            });
        }
    }
}

fn steps_through<P, G, R>(
    problem: &P,
    x: &Vector,
    steps: usize,
    schedule: &StepSchedule,
    k_start: u64,
    recorder: &mut R,
    mut gradient: G,
) -> Result<Vector, OptimError>
where
    P: Problem + ?Sized,
    G: FnMut(usize, &[f64], &mut [f64]),
    R: Recorder + ?Sized,
{
    if x.dim() != problem.dim() {
        return Err(ProblemError::DimensionMismatch {
            expected: problem.dim(),
            found: x.dim(),
        }
        .into());
    }
    let mut x = x.clone();
    let mut g = vec![0.0; x.dim()];
    for s in 0..steps {
        let k = k_start + s as u64;
        gradient(s, &x, &mut g);
        x.axpy(-step_size(schedule, k), &g);
        if !x.is_finite() {
            let n = steps.max(1) as u64;
            return Err(OptimError::Divergence {
                step: k,
                epoch: k / n,
                inner: s,
            });
        }
        recorder.record(s + 1, &x);
    }
    Ok(x)
}

/// One pass `x^{i+1} = x^i − γ_k ∇f_{π_i}(x^i)` over `ordering`, returning `x^n`.
pub fn run_epoch<P, R>(
    problem: &P,
    x: &Vector,
    ordering: &[usize],
    schedule: &StepSchedule,
    k_start: u64,
    recorder: &mut R,
) -> Result<Vector, OptimError>
where
    P: Problem + ?Sized,
    R: Recorder + ?Sized,
{
    let n = problem.num_components();
    if let Some(&bad) = ordering.iter().find(|&&i| i >= n) {
        return Err(ProblemError::IndexOutOfRange { index: bad, n }.into());
    }
    steps_through(problem, x, ordering.len(), schedule, k_start, recorder, |s, x, g| {
        problem.component_gradient_into(ordering[s], x, g)
    })
}

/// Like [`run_epoch`] but each step averages the gradients of a batch.
pub fn run_batch_epoch<P, R>(
    problem: &P,
    x: &Vector,
    batches: &[Vec<usize>],
    schedule: &StepSchedule,
    k_start: u64,
    recorder: &mut R,
) -> Result<Vector, OptimError>
where
    P: Problem + ?Sized,
    R: Recorder + ?Sized,
{
    let n = problem.num_components();
    for batch in batches {
        if batch.is_empty() {
            return Err(ProblemError::Empty.into());
        }
        if let Some(&bad) = batch.iter().find(|&&i| i >= n) {
            return Err(ProblemError::IndexOutOfRange { index: bad, n }.into());
        }
    }
    steps_through(problem, x, batches.len(), schedule, k_start, recorder, |s, x, g| {
        problem.batch_gradient_into(&batches[s], x, g)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: MethodKind,
    /// Ordering for IG (default: identity) or a fixed permutation for SO
    /// (default: drawn from the seed).
    pub base: Option<Permutation>,
    /// Window length for SGD-window (default 1).
    pub window_tau: Option<usize>,
    pub schedule: StepSchedule,
    pub epochs: usize,
    pub seed: u64,
    pub x0: Vector,
    pub record_inner: bool,
    pub record_every: usize,
}

impl RunConfig {
    pub fn new(method: MethodKind, schedule: StepSchedule, epochs: usize, x0: Vector) -> Self {
        RunConfig {
            method,
            base: None,
            window_tau: None,
            schedule,
            epochs,
            seed: 0,
            x0,
            record_inner: false,
            record_every: 1,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_inner(mut self, every: usize) -> Self {
        self.record_inner = true;
        self.record_every = every;
        self
    }

    pub fn with_base(mut self, base: Permutation) -> Self {
        self.base = Some(base);
        self
    }

    fn validate(&self, dim: usize) -> Result<(), OptimError> {
        if self.epochs == 0 {
            return Err(OptimError::InvalidConfig("need at least one epoch".into()));
        }
        if self.record_every == 0 {
            return Err(OptimError::InvalidConfig("record_every must be positive".into()));
        }
        if self.x0.dim() != dim {
            return Err(ProblemError::DimensionMismatch {
                expected: dim,
                found: self.x0.dim(),
            }
            .into());
        }
        if !self.x0.is_finite() {
            return Err(OptimError::InvalidConfig("x0 must be finite".into()));
        }
        Ok(())
    }

    /// The ordering scheme this run uses over `n` components.
    pub fn scheme(&self, n: usize) -> OrderingScheme {
        match self.method {
            MethodKind::So => match &self.base {
                Some(base) => OrderingScheme::so(base.clone()),
                None => OrderingScheme::for_run(MethodKind::So, n, self.seed, None),
            },
            MethodKind::SgdWindow => OrderingScheme::sgd_window(self.window_tau.unwrap_or(1)),
            kind => OrderingScheme::for_run(kind, n, self.seed, self.base.as_ref()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerRecord {
    /// Position `i` of the iterate `x_t^i`, in `1..=n`.
    pub inner: usize,
    pub x: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub method: MethodKind,
    pub seed: u64,
    /// Steps per epoch.
    pub steps_per_epoch: usize,
    pub schedule: StepSchedule,
    /// `x_0, …, x_T`.
    pub epoch_iterates: Vec<Vector>,
    /// Per epoch, the recorded inner iterates (thinned by `record_every`).
    pub inner_iterates: Option<Vec<Vec<InnerRecord>>>,
    /// Per epoch, the component indices visited (window starts for SGD-window;
    /// sample indices for minibatch runs).
    pub orderings: Option<Vec<Vec<usize>>>,
    /// Step size at the first step of each epoch.
    pub gammas: Vec<f64>,
}

impl Trajectory {
    pub fn epochs(&self) -> usize {
        self.epoch_iterates.len() - 1
    }

    pub fn last(&self) -> &Vector {
        self.epoch_iterates.last().expect("trajectory has x_0")
    }

    /// `x_t^0, x_t^1, …, x_t^n` for epoch `t`, if every inner iterate was kept.
    pub fn full_epoch(&self, t: usize) -> Option<Vec<&Vector>> {
        let inner = self.inner_iterates.as_ref()?.get(t)?;
        if inner.len() != self.steps_per_epoch {
            return None;
        }
        let mut points = Vec::with_capacity(inner.len() + 1);
        points.push(&self.epoch_iterates[t]);
        points.extend(inner.iter().map(|r| &r.x));
        Some(points)
    }

    /// Ensemble-ready metrics for each `x_t`.
    pub fn epoch_metrics<P: Problem + ?Sized>(&self, problem: &P, reference: &Reference) -> Vec<PointMetrics> {
        self.epoch_iterates
            .iter()
            .map(|x| point_metrics(problem, x, reference))
            .collect()
    }
}

/// Known optimum, used to report distances and suboptimality.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reference {
    pub x_star: Option<Vector>,
    pub f_star: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMetrics {
    pub f_value: f64,
    pub grad_norm_sq: f64,
    /// `‖x − x*‖²` when `x*` is known.
    pub dist_sq: Option<f64>,
    /// `f(x) − f*` when `f*` is known.
    pub suboptimality: Option<f64>,
}

pub fn point_metrics<P: Problem + ?Sized>(problem: &P, x: &[f64], reference: &Reference) -> PointMetrics {
    let f_value = problem.value(x);
    PointMetrics {
        f_value,
        grad_norm_sq: problem.gradient(x).norm_sq(),
        dist_sq: reference.x_star.as_ref().map(|s| s.dist_sq(x)),
        suboptimality: reference.f_star.map(|f| f_value - f),
    }
}

/// Runs `config.epochs` epochs of the configured method over the components
/// of `problem`. Deterministic in `(config, problem)`.
pub fn run<P: Problem + ?Sized>(config: &RunConfig, problem: &P) -> Result<Trajectory, OptimError> {
    let n = problem.num_components();
    config.validate(problem.dim())?;
    let scheme = config.scheme(n);
    scheme.validate(n)?;
    let window = scheme.window_tau.unwrap_or(1);
    drive(config, n, |t, x, k, rec| {
        let ordering = epoch_ordering(&scheme, n, config.seed, t as u64)?;
        let next = if config.method == MethodKind::SgdWindow && window > 1 {
            let batches: Vec<Vec<usize>> = ordering
                .iter()
                .map(|&s| (0..window).map(|j| (s + j) % n).collect())
                .collect();
            run_batch_epoch(problem, x, &batches, &config.schedule, k, rec)?
        } else {
            run_epoch(problem, x, &ordering, &config.schedule, k, rec)?
        };
        Ok((next, ordering))
    })
}

/// Minibatch protocol over a sample-level problem: each step averages `tau`
/// samples, and an epoch has `⌈N/τ⌉` steps.
///
/// RR regroups from a fresh sample permutation every epoch, SO groups once,
/// IG groups in file order (or `config.base`). SGD draws `tau` samples with
/// replacement per step; SGD-window takes `tau` consecutive samples of a
/// once-shuffled order from a uniform start.
pub fn run_batched<P: Problem + ?Sized>(config: &RunConfig, problem: &P, tau: usize) -> Result<Trajectory, OptimError> {
    let n_samples = problem.num_components();
    config.validate(problem.dim())?;
    if tau == 0 || tau > n_samples {
        return Err(DataError::BadBatchSize { tau, n: n_samples }.into());
    }
    let steps = n_samples.div_ceil(tau);
    let fixed = match config.method {
        MethodKind::So | MethodKind::SgdWindow => Some(match &config.base {
            Some(b) => b.clone(),
            None => sample_permutation(&mut shuffle_once_rng(config.seed), n_samples),
        }),
        MethodKind::Ig => Some(config.base.clone().unwrap_or_else(|| Permutation::identity(n_samples))),
        _ => None,
    };
    if let Some(base) = &fixed {
        if base.len() != n_samples {
            return Err(ShuffleError::BaseLength {
                expected: n_samples,
                found: base.len(),
            }
            .into());
        }
    }
    let fixed_groups = match (config.method, &fixed) {
        (MethodKind::So | MethodKind::Ig, Some(base)) => Some(group_minibatches(n_samples, tau, base)?.groups),
        _ => None,
    };
    drive(config, steps, |t, x, k, rec| {
        let mut rng = stream_rng(config.seed, t as u64);
        let batches = match config.method {
            MethodKind::Rr => {
                let perm = sample_permutation(&mut rng, n_samples);
                group_minibatches(n_samples, tau, &perm)?.groups
            }
            MethodKind::So | MethodKind::Ig => fixed_groups.clone().expect("grouped once"),
            MethodKind::SgdIid => (0..steps)
                .map(|_| (0..tau).map(|_| rng.gen_range(0..n_samples)).collect())
                .collect(),
            MethodKind::SgdWindow => {
                let order = fixed.as_ref().expect("drawn once").as_slice();
                (0..steps)
                    .map(|_| {
                        let s = rng.gen_range(0..n_samples);
                        (0..tau).map(|j| order[(s + j) % n_samples]).collect()
                    })
                    .collect()
            }
        };
        let next = run_batch_epoch(problem, x, &batches, &config.schedule, k, rec)?;
        Ok((next, batches.into_iter().flatten().collect()))
    })
}

fn drive<F>(config: &RunConfig, steps: usize, mut epoch: F) -> Result<Trajectory, OptimError>
where
    F: FnMut(usize, &Vector, u64, &mut dyn Recorder) -> Result<(Vector, Vec<usize>), OptimError>,
{
    let t_max = config.epochs;
    let mut epoch_iterates = Vec::with_capacity(t_max + 1);
    epoch_iterates.push(config.x0.clone());
    let mut inner_all = config.record_inner.then(|| Vec::with_capacity(t_max));
    let mut orderings = config.record_inner.then(|| Vec::with_capacity(t_max));
    let mut gammas = Vec::with_capacity(t_max);
    let mut x = config.x0.clone();
    for t in 0..t_max {
        let k = (t * steps) as u64;
        gammas.push(step_size(&config.schedule, k));
        let mut inner = Vec::new();
        let (next, ordering) = if config.record_inner {
            let mut rec = Thinned {
                every: config.record_every,
                out: &mut inner,
            };
            epoch(t, &x, k, &mut rec)
        } else {
            epoch(t, &x, k, &mut NoRecord)
        }
        .map_err(|e| match e {
            OptimError::Divergence { step, inner, .. } => OptimError::Divergence {
                step,
                epoch: t as u64,
                inner,
            },
            other => other,
        })?;
        if let Some(all) = inner_all.as_mut() {
            all.push(inner);
        }
        if let Some(o) = orderings.as_mut() {
            o.push(ordering);
        }
        epoch_iterates.push(next.clone());
        x = next;
    }
    Ok(Trajectory {
        method: config.method,
        seed: config.seed,
        steps_per_epoch: steps,
        schedule: config.schedule,
        epoch_iterates,
        inner_iterates: inner_all,
        orderings,
        gammas,
    })
}

/// Runs `config` once per seed in parallel. Results come back in seed order.
pub fn run_ensemble<P: Problem + ?Sized>(
    config: &RunConfig,
    problem: &P,
    seeds: &[u64],
) -> Result<Vec<Trajectory>, OptimError> {
    seeds
        .par_iter()
        .map(|&seed| run(&config.clone().with_seed(seed), problem))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Minibatch counterpart of [`run_ensemble`].
pub fn run_batched_ensemble<P: Problem + ?Sized>(
    config: &RunConfig,
    problem: &P,
    tau: usize,
    seeds: &[u64],
) -> Result<Vec<Trajectory>, OptimError> {
    seeds
        .par_iter()
        .map(|&seed| run_batched(&config.clone().with_seed(seed), problem, tau))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: Vector,
    pub f_value: f64,
    pub grad_norm: f64,
    pub evaluations: usize,
    /// Returned from a closed form without iterating.
    pub closed_form: bool,
    /// The problem is nonconvex, so `x` is only known to be stationary.
    pub stationary_only: bool,
}

/// High-precision minimizer by Nesterov's accelerated gradient method
/// (no restarts). Nonconvex problems fall back to gradient descent and are
/// flagged `stationary_only`.
///
/// `tol` defaults to `1e-12 (1 + ‖∇f(x0)‖)` and `x0` to the origin.
pub fn solve_reference<P: Problem + ?Sized>(
    problem: &P,
    x0: Option<&Vector>,
    tol: Option<f64>,
) -> Result<ReferenceSolution, OptimError> {
    let d = problem.dim();
    let constants = problem.constants();
    let nonconvex = !constants.convexity.each_convex() && !constants.convexity.f_strongly_convex();
    if let Some(x) = problem.closed_form_minimizer() {
        let g = problem.gradient(&x);
        return Ok(ReferenceSolution {
            f_value: problem.value(&x),
            grad_norm: g.norm(),
            x,
            evaluations: 0,
            closed_form: true,
            stationary_only: false,
        });
    }
    let x0 = x0.cloned().unwrap_or_else(|| Vector::zeros(d));
    if x0.dim() != d {
        return Err(ProblemError::DimensionMismatch {
            expected: d,
            found: x0.dim(),
        }
        .into());
    }
    let mut g = vec![0.0; d];
    problem.gradient_into(&x0, &mut g);
    let tol = tol.unwrap_or(1e-12 * (1.0 + norm_sq(&g).sqrt()));
    let step = 1.0 / constants.l;
    let momentum_sc = constants.kappa().map(|k| (k.sqrt() - 1.0) / (k.sqrt() + 1.0));

    let mut x = x0.clone();
    let mut y = x0;
    let mut evaluations = 1;
    let mut k = 1u64;
    loop {
        let grad_norm = norm_sq(&g).sqrt();
        if grad_norm <= tol {
            return Ok(ReferenceSolution {
                f_value: problem.value(&y),
                grad_norm,
                x: y,
                evaluations,
                closed_form: false,
                stationary_only: nonconvex,
            });
        }
        if evaluations >= REFERENCE_EVALUATION_CAP {
            return Err(OptimError::IterationCap {
                evaluations,
                grad_norm,
                tol,
            });
        }
        let mut next = y.clone();
        next.axpy(-step, &g);
        let beta = if nonconvex {
            0.0
        } else {
            momentum_sc.unwrap_or((k as f64 - 1.0) / (k as f64 + 2.0))
        };
        y = next.clone();
        y.axpy(beta, &next.sub(&x));
        x = next;
        problem.gradient_into(&y, &mut g);
        evaluations += 1;
        k += 1;
        if !y.is_finite() {
            return Err(OptimError::Divergence {
                step: k,
                epoch: 0,
                inner: 0,
            });
        }
    }
}
