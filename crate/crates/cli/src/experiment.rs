//! The three experiment modes. Each (method, seed) cell runs on the rayon
//! pool into its own buffer; files are assembled in config order so output
//! bytes depend only on the config and the seeds.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use reshuffle::analysis::{
    check_bound, mean_ci, prop1_bounds, shuffle_variance_samples, sigma_shuffle_sq, BoundOptions, TheoremId,
};
use reshuffle::data::{
    default_regularizer, group_minibatches, parse_libsvm_with, synthetic_classification, LibsvmOptions,
};
use reshuffle::optim::{
    default_k0, run, run_batched, solve_reference, OptimError, RunConfig, StepSchedule, Trajectory, SGD_NUMERATOR,
    SHUFFLED_NUMERATOR,
};
use reshuffle::problem::{Grouped, Logistic, LogisticSpec, Quadratic, QuadraticSpec, Wavy};
use reshuffle::shuffle::{sample_permutation, shuffle_once_rng};
use reshuffle::{MethodKind, Problem, Vector};

use crate::config::{ExperimentConfig, Over, ProblemConfig, ScheduleConfig};
use crate::error::CliError;
use crate::output::{
    distribution_csv, report_csv, summary_csv, sweep_csv, trajectory_csv, write_file, ReportRow, SummaryRow, SweepRow,
    TrajectoryRow,
};

/// Files written and the number of failed checks or diverged runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failures: usize,
}

pub type DynProblem = Box<dyn Problem>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

fn read_libsvm(path: &Path, dim: Option<usize>) -> Result<reshuffle::data::Dataset, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut text = String::new();
    let result = if path.extension().is_some_and(|e| e == "gz") {
        flate2::read::GzDecoder::new(file).read_to_string(&mut text)
    } else {
        std::io::BufReader::new(file).read_to_string(&mut text)
    };
    result.map_err(|e| CliError::io(path, e))?;
    parse_libsvm_with(&text, LibsvmOptions { dim }).map_err(|source| CliError::Libsvm {
        path: path.to_path_buf(),
        source,
    })
}

fn logistic(dataset: reshuffle::data::Dataset, lambda: Option<f64>) -> Result<Logistic, CliError> {
    let lambda = match lambda {
        Some(l) => l,
        None => {
            let n = dataset.num_samples();
            let probe = Logistic::new(LogisticSpec {
                dataset: dataset.clone(),
                lambda: 0.0,
            })?;
            default_regularizer(probe.l_f(), n)
        }
    };
    Ok(Logistic::new(LogisticSpec { dataset, lambda })?)
}

/// Builds the sample-level problem. Relative dataset paths resolve against
/// `base_dir`.
pub fn build_problem(config: &ProblemConfig, base_dir: &Path) -> Result<DynProblem, CliError> {
    Ok(match config {
        ProblemConfig::Quadratic { centers, curvatures } => {
            let centers: Vec<Vector> = centers.iter().map(|c| Vector::from_vec(c.to_vec())).collect();
            let spec = match curvatures {
                Some(a) => QuadraticSpec {
                    centers,
                    curvatures: a.clone(),
                },
                None => QuadraticSpec::uniform(centers),
            };
            Box::new(Quadratic::new(spec)?)
        }
        ProblemConfig::Logistic { path, lambda, dim } => {
            let path = base_dir.join(path);
            Box::new(logistic(read_libsvm(&path, *dim)?, *lambda)?)
        }
        ProblemConfig::SyntheticLogistic {
            samples,
            dim,
            seed,
            lambda,
        } => {
            if *samples == 0 || *dim == 0 {
                return Err(invalid("synthetic data needs positive samples and dim"));
            }
            Box::new(logistic(synthetic_classification(*samples, *dim, *seed), *lambda)?)
        }
        ProblemConfig::Wavy { centers, amplitude } => Box::new(Wavy::new(
            centers.iter().map(|c| Vector::from_vec(c.to_vec())).collect(),
            *amplitude,
        )?),
    })
}

/// Minibatch components cut from a fixed shuffle of the samples, so sorted
/// files do not produce label-homogeneous groups.
pub fn group(problem: &dyn Problem, tau: usize) -> Result<Grouped<&dyn Problem>, CliError> {
    let n = problem.num_components();
    let order = sample_permutation(&mut shuffle_once_rng(0), n);
    Ok(Grouped::new(problem, group_minibatches(n, tau, &order)?)?)
}

fn steps_per_epoch(n: usize, tau: usize) -> usize {
    n.div_ceil(tau)
}

fn schedule_for(
    config: &ExperimentConfig,
    problem: &dyn Problem,
    method: MethodKind,
) -> Result<StepSchedule, CliError> {
    let spec = config
        .schedule
        .as_ref()
        .ok_or_else(|| invalid("a [schedule] section is required"))?;
    Ok(match spec {
        ScheduleConfig::Constant { gamma } => StepSchedule::constant(*gamma)?,
        ScheduleConfig::CappedInverse { k0, c } => {
            let consts = problem.constants();
            let total = (steps_per_epoch(problem.num_components(), config.tau) * config.epochs) as u64;
            let numerator = c.unwrap_or(match method {
                MethodKind::SgdIid | MethodKind::SgdWindow => SGD_NUMERATOR,
                _ => SHUFFLED_NUMERATOR,
            });
            StepSchedule::capped_inverse(consts.l, consts.mu, k0.unwrap_or(default_k0(total)), numerator)?
        }
    })
}

fn start_point(config: &ExperimentConfig, dim: usize) -> Result<Vector, CliError> {
    match &config.x0 {
        Some(x) if x.len() != dim => Err(invalid(format!(
            "x0 has {} entries, problem dimension is {dim}",
            x.len()
        ))),
        Some(x) => Ok(Vector::from_vec(x.clone())),
        None => Ok(Vector::zeros(dim)),
    }
}

fn run_config(
    config: &ExperimentConfig,
    problem: &dyn Problem,
    method: MethodKind,
    record_inner: bool,
) -> Result<RunConfig, CliError> {
    let mut rc = RunConfig::new(
        method,
        schedule_for(config, problem, method)?,
        config.epochs,
        start_point(config, problem.dim())?,
    );
    if record_inner {
        rc = rc.with_inner(config.record_every);
    }
    Ok(rc)
}

fn run_one(rc: &RunConfig, problem: &dyn Problem, tau: usize, seed: u64) -> Result<Trajectory, OptimError> {
    let rc = rc.clone().with_seed(seed);
    if tau == 1 {
        run(&rc, problem)
    } else {
        run_batched(&rc, problem, tau)
    }
}

/// Minimizer for distance metrics; only when it is a global one.
fn reference_point(problem: &dyn Problem, x0: &Vector) -> Result<Option<Vector>, CliError> {
    let c = problem.constants().convexity;
    if !(c.each_convex() || c.f_strongly_convex()) {
        return Ok(None);
    }
    Ok(Some(solve_reference(problem, Some(x0), None)?.x))
}

struct Metrics {
    f_value: f64,
    dist_sq: Option<f64>,
    grad_norm_sq: f64,
}

fn metrics(problem: &dyn Problem, x: &[f64], x_star: Option<&Vector>) -> Metrics {
    Metrics {
        f_value: problem.value(x),
        dist_sq: x_star.map(|s| s.dist_sq(x)),
        grad_norm_sq: problem.gradient(x).norm_sq(),
    }
}

/// Rows for one run, or a single row of infinities at the failing step.
fn trajectory_rows(
    problem: &dyn Problem,
    method: MethodKind,
    seed: u64,
    steps: usize,
    schedule: &StepSchedule,
    result: &Result<Trajectory, OptimError>,
    x_star: Option<&Vector>,
) -> Vec<TrajectoryRow> {
    let row = |epoch: usize, inner: usize, m: Metrics| {
        let global = (epoch * steps + inner) as u64;
        TrajectoryRow {
            method: method.name().to_string(),
            seed,
            epoch,
            inner_step: inner,
            global_step: global,
            gamma: schedule.at(global),
            f_value: Some(m.f_value),
            dist_sq: m.dist_sq,
            grad_norm_sq: Some(m.grad_norm_sq),
        }
    };
    match result {
        Ok(tr) => {
            let mut rows = Vec::new();
            for (t, x) in tr.epoch_iterates.iter().enumerate() {
                rows.push(row(t, 0, metrics(problem, x, x_star)));
                let inner = tr.inner_iterates.as_ref().and_then(|v| v.get(t));
                // the last inner iterate is the next epoch's start
                for r in inner.into_iter().flatten().filter(|r| r.inner < steps) {
                    rows.push(row(t, r.inner, metrics(problem, &r.x, x_star)));
                }
            }
            rows
        }
        Err(OptimError::Divergence { step, epoch, inner }) => vec![TrajectoryRow {
            method: method.name().to_string(),
            seed,
            epoch: *epoch as usize,
            inner_step: *inner,
            global_step: *step,
            gamma: schedule.at(*step),
            f_value: Some(f64::INFINITY),
            dist_sq: x_star.map(|_| f64::INFINITY),
            grad_norm_sq: Some(f64::INFINITY),
        }],
        Err(_) => Vec::new(),
    }
}

fn summarize(
    method: MethodKind,
    runs: &[&Trajectory],
    problem: &dyn Problem,
    x_star: Option<&Vector>,
) -> Vec<SummaryRow> {
    let Some(first) = runs.first() else { return Vec::new() };
    (0..=first.epochs())
        .map(|t| {
            let ms: Vec<Metrics> = runs
                .iter()
                .map(|tr| metrics(problem, &tr.epoch_iterates[t], x_star))
                .collect();
            let f = mean_ci(&ms.iter().map(|m| m.f_value).collect::<Vec<_>>());
            let g = mean_ci(&ms.iter().map(|m| m.grad_norm_sq).collect::<Vec<_>>());
            let d = x_star.map(|_| mean_ci(&ms.iter().map(|m| m.dist_sq.unwrap()).collect::<Vec<_>>()));
            SummaryRow {
                method: method.name().to_string(),
                epoch: t,
                count: runs.len(),
                f_mean: f.mean,
                f_ci: f.ci,
                dist_sq_mean: d.map(|d| d.mean),
                dist_sq_ci: d.map(|d| d.ci),
                grad_norm_sq_mean: g.mean,
                grad_norm_sq_ci: g.ci,
            }
        })
        .collect()
}

/// Trajectory CSV per method plus `summary.csv`. Diverged runs are written as
/// a row of infinities and counted as failures.
pub fn run_trajectories(
    config: &ExperimentConfig,
    problem: &dyn Problem,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Outcome, CliError> {
    let n = problem.num_components();
    if config.tau > n {
        return Err(invalid(format!("tau = {} exceeds the {n} samples", config.tau)));
    }
    let steps = steps_per_epoch(n, config.tau);
    let x0 = start_point(config, problem.dim())?;
    let x_star = reference_point(problem, &x0)?;
    let mut outcome = Outcome::default();
    let mut summary = Vec::new();
    for method in config.methods() {
        let rc = run_config(config, problem, method, config.record_inner)?;
        let results: Vec<Result<Trajectory, OptimError>> = seeds
            .par_iter()
            .map(|&s| run_one(&rc, problem, config.tau, s))
            .collect();
        let mut rows = Vec::new();
        for (seed, result) in seeds.iter().zip(&results) {
            match result {
                Ok(_) => {}
                Err(OptimError::Divergence { .. }) => outcome.failures += 1,
                Err(e) => return Err(e.clone().into()),
            }
            rows.extend(trajectory_rows(
                problem,
                method,
                *seed,
                steps,
                &rc.schedule,
                result,
                x_star.as_ref(),
            ));
        }
        let path = out_dir.join(format!("traj_{}.csv", method.name()));
        write_file(&path, &trajectory_csv(&rows))?;
        outcome.files.push(path);
        let ok: Vec<&Trajectory> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        summary.extend(summarize(method, &ok, problem, x_star.as_ref()));
    }
    let path = out_dir.join("summary.csv");
    write_file(&path, &summary_csv(&summary))?;
    outcome.files.push(path);
    Ok(outcome)
}

fn refusal(
    theorem: &str,
    method: &str,
    gamma: Option<f64>,
    config: &ExperimentConfig,
    seeds: usize,
    slack: f64,
    note: String,
) -> ReportRow {
    ReportRow {
        theorem: theorem.to_string(),
        method: method.to_string(),
        gamma,
        epochs: config.epochs,
        seeds,
        rhs: None,
        observed: None,
        ci_halfwidth: None,
        slack,
        pass: false,
        note,
    }
}

/// One report row per (theorem, applicable method); refusals are failing
/// rows with the reason in `note`.
pub fn run_checks(
    config: &ExperimentConfig,
    problem: &dyn Problem,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Outcome, CliError> {
    let check = config
        .check
        .as_ref()
        .ok_or_else(|| invalid("a [check] section is required"))?;
    if config.tau > problem.num_components() {
        return Err(invalid(format!("tau = {} exceeds the sample count", config.tau)));
    }
    let grouped;
    let problem: &dyn Problem = if config.tau > 1 {
        grouped = group(problem, config.tau)?;
        &grouped
    } else {
        problem
    };
    let gamma = match &config.schedule {
        Some(ScheduleConfig::Constant { gamma }) => Some(*gamma),
        _ => None,
    };
    let options = BoundOptions {
        slack: check.slack,
        f_star: check.f_star,
        shuffle: check.estimation.to_estimation(),
        ..BoundOptions::default()
    };
    let methods = config.methods();
    let mut ensembles: BTreeMap<&'static str, Result<Vec<Trajectory>, String>> = BTreeMap::new();
    let mut rows = Vec::new();
    for name in &check.theorems {
        let id = TheoremId::parse(name).expect("validated");
        let applicable: Vec<MethodKind> = methods.iter().copied().filter(|m| id.methods().contains(m)).collect();
        if applicable.is_empty() {
            let wanted: Vec<&str> = id.methods().iter().map(|m| m.name()).collect();
            rows.push(refusal(
                name,
                "",
                gamma,
                config,
                0,
                check.slack,
                format!("needs one of the methods {}", wanted.join("/")),
            ));
            continue;
        }
        for method in applicable {
            let ensemble = ensembles.entry(method.name()).or_insert_with(|| {
                let rc = run_config(config, problem, method, false).map_err(|e| e.to_string())?;
                // a deterministic method needs one run
                let seeds = if method.is_deterministic() { &seeds[..1] } else { seeds };
                seeds
                    .par_iter()
                    .map(|&s| run_one(&rc, problem, 1, s))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| e.to_string())
            });
            let row = match ensemble {
                Err(note) => refusal(name, method.name(), gamma, config, 0, check.slack, note.clone()),
                Ok(ens) => match gamma
                    .ok_or_else(|| "bounds need a constant step size".to_string())
                    .and_then(|g| check_bound(id, problem, ens, g, &options).map_err(|e| e.to_string()))
                {
                    Ok(c) => ReportRow {
                        theorem: name.clone(),
                        method: method.name().to_string(),
                        gamma: Some(c.gamma),
                        epochs: c.epochs,
                        seeds: ens.len(),
                        rhs: Some(c.rhs),
                        observed: Some(c.observed),
                        ci_halfwidth: Some(c.ci_halfwidth),
                        slack: c.slack,
                        pass: c.pass,
                        note: String::new(),
                    },
                    Err(note) => refusal(name, method.name(), gamma, config, ens.len(), check.slack, note),
                },
            };
            rows.push(row);
        }
    }
    let path = out_dir.join("report.csv");
    write_file(&path, &report_csv(&rows))?;
    Ok(Outcome {
        failures: rows.iter().filter(|r| !r.pass).count(),
        files: vec![path],
    })
}

/// `points` step sizes from `1/L` down to `1e-4/L`, geometrically spaced.
pub fn gamma_grid(l: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![1.0 / l],
        p => (0..p)
            .map(|k| 10f64.powf(-4.0 * k as f64 / (p - 1) as f64) / l)
            .collect(),
    }
}

/// Shuffling-variance table over a γ grid or a τ grid.
pub fn run_sweep(config: &ExperimentConfig, problem: &dyn Problem, out_dir: &Path) -> Result<Outcome, CliError> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| invalid("a [sweep] section is required"))?;
    let l = problem.constants().l;
    let cells: Vec<(usize, f64)> = match sweep.over {
        Over::Gamma => {
            let grid = sweep.gammas.clone().unwrap_or_else(|| gamma_grid(l, sweep.points));
            grid.into_iter().map(|g| (config.tau, g)).collect()
        }
        Over::Tau => {
            let gamma = sweep.gamma.unwrap_or(1.0 / l);
            sweep
                .taus
                .clone()
                .unwrap_or_default()
                .into_iter()
                .map(|t| (t, gamma))
                .collect()
        }
    };
    if cells.is_empty() {
        return Err(invalid("the sweep grid is empty"));
    }
    let estimation = sweep.estimation.to_estimation();
    let mut rows = Vec::new();
    let mut dist = Vec::new();
    let mut minimizers: BTreeMap<usize, Vector> = BTreeMap::new();
    for (tau, gamma) in cells {
        let grouped = group(problem, tau)?;
        let x_star = match minimizers.get(&tau) {
            Some(x) => x.clone(),
            None => {
                let x = solve_reference(&grouped, None, None)?.x;
                minimizers.insert(tau, x.clone());
                x
            }
        };
        let r = sigma_shuffle_sq(&grouped, &x_star, gamma, estimation)?;
        let c = grouped.constants();
        let (lo, hi) = prop1_bounds(gamma, c.mu, c.l, grouped.num_components(), r.sigma_star_sq);
        rows.push(SweepRow {
            tau,
            gamma,
            sigma_star_sq: r.sigma_star_sq,
            sigma_shuffle_est: r.sigma_shuffle_sq,
            ci: r.ci_halfwidth,
            prop1_lower: lo,
            prop1_upper: hi,
        });
        if sweep.distribution_samples > 0 {
            let seed = sweep.estimation.seed;
            let samples = shuffle_variance_samples(&grouped, &x_star, gamma, sweep.distribution_samples, seed)?;
            dist.push((tau, gamma, samples));
        }
    }
    let mut outcome = Outcome::default();
    let path = out_dir.join("sweep.csv");
    write_file(&path, &sweep_csv(&rows))?;
    outcome.files.push(path);
    if !dist.is_empty() {
        let path = out_dir.join("distribution.csv");
        write_file(&path, &distribution_csv(&dist))?;
        outcome.files.push(path);
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = gamma_grid(2.0, 5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 0.5);
        assert!((g[4] - 0.5e-4).abs() < 1e-18);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert!(gamma_grid(1.0, 0).is_empty());
        assert_eq!(gamma_grid(4.0, 1), vec![0.25]);
    }

    #[test]
    fn divergence_row() {
        let q = Quadratic::new(QuadraticSpec::scalar(&[0.0, 1.0])).unwrap();
        let schedule = StepSchedule::constant(0.5).unwrap();
        let result = Err(OptimError::Divergence {
            step: 7,
            epoch: 3,
            inner: 1,
        });
        let rows = trajectory_rows(&q, MethodKind::Rr, 4, 2, &schedule, &result, Some(&Vector::scalar(0.5)));
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].epoch, rows[0].inner_step, rows[0].global_step), (3, 1, 7));
        assert_eq!(rows[0].dist_sq, Some(f64::INFINITY));
    }
}
