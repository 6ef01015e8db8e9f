//! Permutations, per-epoch orderings for every method, and the exact
//! statistics of sampling without replacement.

use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::vector::{dist_sq, mean_of, Vector};

/// Largest `n` accepted by the exhaustive enumeration oracles (8! = 40320).
pub const MAX_ENUMERATION_N: usize = 8;

/// Stream reserved for the one-time permutation of shuffle-once style methods.
const SHUFFLE_ONCE_STREAM: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShuffleError {
    #[error("not a permutation of 0..{n}: {reason}")]
    NotAPermutation { n: usize, reason: String },
    #[error("{kind} ordering needs a base permutation")]
    MissingBase { kind: MethodKind },
    #[error("SGD window ordering needs a window size")]
    MissingWindow,
    #[error("base permutation has length {found}, expected {expected}")]
    BaseLength { expected: usize, found: usize },
    #[error("sample size {k} out of range 1..={n}")]
    SampleSize { k: usize, n: usize },
    #[error("enumeration limited to n <= {max}, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("need at least {min} vectors, got {n}")]
    TooFew { n: usize, min: usize },
}

/// A bijection on `{0, …, n−1}`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self, ShuffleError> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n {
                return Err(ShuffleError::NotAPermutation {
                    n,
                    reason: format!("index {i} out of range"),
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(ShuffleError::NotAPermutation {
                    n,
                    reason: format!("index {i} repeated"),
                });
            }
        }
        Ok(Permutation(order))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Deterministic generator for stream `stream` of run `seed`.
///
/// Streams are independent ChaCha8 keystreams, so epoch `t` of a run can be
/// regenerated without replaying epochs `0..t`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn shuffle_once_rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, SHUFFLE_ONCE_STREAM)
}

/// Uniform permutation by Fisher–Yates.
pub fn sample_permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Permutation {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    Permutation(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    /// Random reshuffling: fresh permutation every epoch.
    Rr,
    /// Shuffle-once: one permutation reused every epoch.
    So,
    /// Incremental gradient: fixed deterministic order.
    Ig,
    /// SGD with indices drawn independently with replacement.
    SgdIid,
    /// SGD drawing one uniform start per step and taking a contiguous window.
    SgdWindow,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] = [
        MethodKind::Rr,
        MethodKind::So,
        MethodKind::Ig,
        MethodKind::SgdIid,
        MethodKind::SgdWindow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Rr => "rr",
            MethodKind::So => "so",
            MethodKind::Ig => "ig",
            MethodKind::SgdIid => "sgd",
            MethodKind::SgdWindow => "sgd-window",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rr" => Some(MethodKind::Rr),
            "so" => Some(MethodKind::So),
            "ig" => Some(MethodKind::Ig),
            "sgd" | "sgd-iid" => Some(MethodKind::SgdIid),
            "sgd-window" => Some(MethodKind::SgdWindow),
            _ => None,
        }
    }

    pub fn is_deterministic(self) -> bool {
        self == MethodKind::Ig
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How each epoch visits the `n` components.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingScheme {
    pub kind: MethodKind,
    pub base: Option<Permutation>,
    pub window_tau: Option<usize>,
}

impl OrderingScheme {
    pub fn rr() -> Self {
        OrderingScheme {
            kind: MethodKind::Rr,
            base: None,
            window_tau: None,
        }
    }

    pub fn so(base: Permutation) -> Self {
        OrderingScheme {
            kind: MethodKind::So,
            base: Some(base),
            window_tau: None,
        }
    }

    pub fn ig(base: Permutation) -> Self {
        OrderingScheme {
            kind: MethodKind::Ig,
            base: Some(base),
            window_tau: None,
        }
    }

    pub fn sgd_iid() -> Self {
        OrderingScheme {
            kind: MethodKind::SgdIid,
            base: None,
            window_tau: None,
        }
    }

    pub fn sgd_window(window_tau: usize) -> Self {
        OrderingScheme {
            kind: MethodKind::SgdWindow,
            base: None,
            window_tau: Some(window_tau),
        }
    }

    /// Scheme for one run of `kind` over `n` components: SO draws its base from
    /// the run seed, IG uses `ig_base` or the identity (file order).
    pub fn for_run(kind: MethodKind, n: usize, seed: u64, ig_base: Option<&Permutation>) -> Self {
        match kind {
            MethodKind::Rr => Self::rr(),
            MethodKind::So => Self::so(sample_permutation(&mut shuffle_once_rng(seed), n)),
            MethodKind::Ig => Self::ig(ig_base.cloned().unwrap_or_else(|| Permutation::identity(n))),
            MethodKind::SgdIid => Self::sgd_iid(),
            MethodKind::SgdWindow => Self::sgd_window(1),
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), ShuffleError> {
        match self.kind {
            MethodKind::So | MethodKind::Ig => {
                let base = self
                    .base
                    .as_ref()
                    .ok_or(ShuffleError::MissingBase { kind: self.kind })?;
                if base.len() != n {
                    return Err(ShuffleError::BaseLength {
                        expected: n,
                        found: base.len(),
                    });
                }
            }
            MethodKind::SgdWindow => {
                let w = self.window_tau.ok_or(ShuffleError::MissingWindow)?;
                if w == 0 || w > n {
                    return Err(ShuffleError::SampleSize { k: w, n });
                }
            }
            MethodKind::Rr | MethodKind::SgdIid => {}
        }
        Ok(())
    }
}

/// Component indices visited in epoch `t` of the run seeded by `seed`.
///
/// For `SgdWindow` the entries are window start indices.
pub fn epoch_ordering(scheme: &OrderingScheme, n: usize, seed: u64, t: u64) -> Result<Vec<usize>, ShuffleError> {
    scheme.validate(n)?;
    let mut rng = stream_rng(seed, t);
    Ok(match scheme.kind {
        MethodKind::Rr => sample_permutation(&mut rng, n).into_inner(),
        MethodKind::So | MethodKind::Ig => scheme.base.as_ref().expect("validated").0.clone(),
        MethodKind::SgdIid | MethodKind::SgdWindow => (0..n).map(|_| rng.gen_range(0..n)).collect(),
    })
}

/// Output of [`wor_mean_and_variance`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorStats {
    /// `E‖X̄_π − X̄‖²` for a size-`k` sample without replacement.
    pub predicted_variance: f64,
    pub mean: Vector,
    /// Population variance `(1/n) Σ ‖X_i − X̄‖²`.
    pub population_variance: f64,
}

/// Variance of the mean of `k` vectors drawn without replacement:
/// `(n − k) / (k (n − 1)) · σ²`.
pub fn wor_mean_and_variance(xs: &[Vector], k: usize) -> Result<WorStats, ShuffleError> {
    let n = xs.len();
    if n < 2 {
        return Err(ShuffleError::TooFew { n, min: 2 });
    }
    if k == 0 || k > n {
        return Err(ShuffleError::SampleSize { k, n });
    }
    let mean = mean_of(xs);
    let population_variance = xs.iter().map(|x| dist_sq(x, &mean)).sum::<f64>() / n as f64;
    let predicted_variance = (n - k) as f64 / (k as f64 * (n - 1) as f64) * population_variance;
    Ok(WorStats {
        predicted_variance,
        mean,
        population_variance,
    })
}

/// Calls `visit` on every permutation of `0..n` in lexicographic order.
pub fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        visit(&perm);
        if !next_permutation(&mut perm) {
            break;
        }
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Exact mean of `functional` over all `n!` permutations.
///
/// The permutation space is split by leading element across workers and the
/// partial sums are added in a fixed order, so the result is bit-reproducible.
pub fn enumerate_permutation_expectation<F>(n: usize, functional: F) -> Result<f64, ShuffleError>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    let means = enumerate_permutation_means(n, 1, |p, out| out[0] = functional(p))?;
    Ok(means[0])
}

/// Vector-valued form of [`enumerate_permutation_expectation`]: `functional`
/// writes `width` values per permutation and the exact means are returned.
pub fn enumerate_permutation_means<F>(n: usize, width: usize, functional: F) -> Result<Vec<f64>, ShuffleError>
where
    F: Fn(&[usize], &mut [f64]) + Sync,
{
    if n > MAX_ENUMERATION_N {
        return Err(ShuffleError::TooLarge {
            n,
            max: MAX_ENUMERATION_N,
        });
    }
    if n == 0 {
        return Err(ShuffleError::TooFew { n, min: 1 });
    }
    let partials: Vec<(Vec<f64>, usize)> = (0..n)
        .into_par_iter()
        .map(|first| {
            let rest: Vec<usize> = (0..n).filter(|&v| v != first).collect();
            let mut perm = vec![first; n];
            let mut sum = vec![0.0; width];
            let mut buf = vec![0.0; width];
            let mut count = 0usize;
            for_each_permutation(n - 1, |tail| {
                for (slot, &t) in perm[1..].iter_mut().zip(tail) {
                    *slot = rest[t];
                }
                buf.iter_mut().for_each(|b| *b = 0.0);
                functional(&perm, &mut buf);
                for (s, b) in sum.iter_mut().zip(&buf) {
                    *s += b;
                }
                count += 1;
            });
            (sum, count)
        })
        .collect();
    let mut total = vec![0.0; width];
    let mut count = 0usize;
    for (partial, c) in &partials {
        for (t, p) in total.iter_mut().zip(partial) {
            *t += p;
        }
        count += c;
    }
    Ok(total.into_iter().map(|t| t / count as f64).collect())
}
