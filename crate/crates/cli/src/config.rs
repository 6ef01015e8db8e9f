//! Experiment configuration, read from a TOML document. Unknown keys are
//! rejected so a typo cannot silently change an experiment.

use std::path::{Path, PathBuf};

use reshuffle::MethodKind;
use serde::Deserialize;

use crate::error::CliError;

/// Default ensemble size for trajectories and plots.
pub const DEFAULT_RUN_SEEDS: u64 = 20;
/// Default ensemble size for bound checks, which need tight intervals.
pub const DEFAULT_CHECK_SEEDS: u64 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Trajectories,
    VarianceSweep,
    BoundCheck,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Trajectories => "trajectories",
            Mode::VarianceSweep => "variance-sweep",
            Mode::BoundCheck => "bound-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub problem: ProblemConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    pub seeds: Option<SeedSpec>,
    #[serde(default = "one")]
    pub tau: usize,
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub record_inner: bool,
    #[serde(default = "one")]
    pub record_every: usize,
    pub output: Option<PathBuf>,
    pub schedule: Option<ScheduleConfig>,
    pub check: Option<CheckConfig>,
    pub sweep: Option<SweepConfig>,
}

fn default_methods() -> Vec<String> {
    vec!["rr".into()]
}

fn default_epochs() -> usize {
    30
}

fn one() -> usize {
    1
}

/// Either a count `k` (seeds `0..k`) or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// `½ a_i ‖x − b_i‖²`; scalar centers are accepted as plain numbers.
    Quadratic {
        centers: Vec<Center>,
        curvatures: Option<Vec<f64>>,
    },
    /// LIBSVM file, optionally gzip-compressed (`.gz`).
    Logistic {
        path: PathBuf,
        lambda: Option<f64>,
        dim: Option<usize>,
    },
    SyntheticLogistic {
        samples: usize,
        dim: usize,
        #[serde(default)]
        seed: u64,
        lambda: Option<f64>,
    },
    Wavy {
        centers: Vec<Center>,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Center {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Center {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Center::Scalar(v) => vec![*v],
            Center::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Constant {
        gamma: f64,
    },
    /// `min{1/L, c/(μ(k − k0))}` after `k0` steps of `1/L`.
    CappedInverse {
        k0: Option<u64>,
        c: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub theorems: Vec<String>,
    #[serde(default)]
    pub slack: f64,
    #[serde(default)]
    pub estimation: EstimationConfig,
    /// Known optimal value for the nonconvex checks.
    pub f_star: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Over {
    Gamma,
    Tau,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub over: Over,
    /// Explicit step sizes; otherwise a geometric grid from `1/L` down to `1e-4/L`.
    pub gammas: Option<Vec<f64>>,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Minibatch sizes for a τ-sweep.
    pub taus: Option<Vec<usize>>,
    /// Step size of a τ-sweep; defaults to `1/L`.
    pub gamma: Option<f64>,
    #[serde(default)]
    pub estimation: EstimationConfig,
    /// Per-permutation samples written to `distribution.csv` for each row.
    #[serde(default)]
    pub distribution_samples: usize,
}

fn default_points() -> usize {
    13
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationKind {
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default = "auto")]
    pub kind: EstimationKind,
    #[serde(default = "default_perms")]
    pub num_perms: usize,
    #[serde(default)]
    pub seed: u64,
}

fn auto() -> EstimationKind {
    EstimationKind::Auto
}

fn default_perms() -> usize {
    20_000
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            kind: EstimationKind::Auto,
            num_perms: default_perms(),
            seed: 0,
        }
    }
}

impl EstimationConfig {
    pub fn to_estimation(self) -> reshuffle::analysis::Estimation {
        use reshuffle::analysis::Estimation;
        match self.kind {
            EstimationKind::Auto => Estimation::Auto {
                num_perms: self.num_perms,
                seed: self.seed,
            },
            EstimationKind::Exact => Estimation::Exact,
            EstimationKind::MonteCarlo => Estimation::MonteCarlo {
                num_perms: self.num_perms,
                seed: self.seed,
            },
        }
    }
}

/// Parses a config document. `origin` names the source in error messages.
pub fn parse_config(text: &str, origin: &Path) -> Result<ExperimentConfig, CliError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config {
        path: origin.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })?;
    config.validate().map_err(|message| CliError::Config {
        path: origin.to_path_buf(),
        message,
    })?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, path)
}

impl ExperimentConfig {
    fn validate(&self) -> Result<(), String> {
        if self.methods.is_empty() {
            return Err("at least one method is required".into());
        }
        for m in &self.methods {
            if MethodKind::parse(m).is_none() {
                return Err(format!("unknown method `{m}`"));
            }
        }
        if self.seeds.is_some() && self.seed_list(0).is_empty() {
            return Err("seeds must be nonempty".into());
        }
        if self.tau == 0 {
            return Err("tau must be positive".into());
        }
        if self.record_every == 0 {
            return Err("record_every must be positive".into());
        }
        if let Some(check) = &self.check {
            if check.theorems.is_empty() {
                return Err("check.theorems must be nonempty".into());
            }
            for t in &check.theorems {
                if reshuffle::analysis::TheoremId::parse(t).is_none() {
                    return Err(format!("unknown theorem `{t}`"));
                }
            }
            if !(check.slack >= 0.0) {
                return Err("check.slack must be nonnegative".into());
            }
        }
        Ok(())
    }

    pub fn methods(&self) -> Vec<MethodKind> {
        self.methods
            .iter()
            .map(|m| MethodKind::parse(m).expect("validated"))
            .collect()
    }

    /// Seeds from the config, or `0..default` when absent.
    pub fn seed_list(&self, default: u64) -> Vec<u64> {
        match &self.seeds {
            None => (0..default).collect(),
            Some(SeedSpec::Count(k)) => (0..*k).collect(),
            Some(SeedSpec::List(v)) => v.clone(),
        }
    }
}

/// Parses the half-open range `a..b`.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::SeedRange(s.to_string());
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if a >= b {
        return Err(bad());
    }
    Ok((a..b).collect())
}
