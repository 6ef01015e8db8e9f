use rayon::prelude::*;

use crate::problem::Problem;
use crate::shuffle::{enumerate_permutation_means, sample_permutation, stream_rng, Permutation, MAX_ENUMERATION_N};
use crate::vector::{dot, Vector};

use super::stats::Z95;
use super::AnalysisError;

/// Relative tolerance of the minimizer check `‖∇f(x*)‖ ≤ 1e-8 (1 + ‖x*‖)`.
pub const MINIMIZER_TOL: f64 = 1e-8;

pub fn check_minimizer<P: Problem + ?Sized>(problem: &P, x_star: &[f64]) -> Result<(), AnalysisError> {
    if x_star.len() != problem.dim() {
        return Err(crate::problem::ProblemError::DimensionMismatch {
            expected: problem.dim(),
            found: x_star.len(),
        }
        .into());
    }
    let grad_norm = problem.gradient(x_star).norm();
    let tol = MINIMIZER_TOL * (1.0 + crate::vector::norm_sq(x_star).sqrt());
    if grad_norm <= tol {
        Ok(())
    } else {
        Err(AnalysisError::NotAMinimizer { grad_norm, tol })
    }
}

/// `D_{f_i}(x, y) = f_i(x) − f_i(y) − ⟨∇f_i(y), x − y⟩`.
pub fn bregman<P: Problem + ?Sized>(problem: &P, i: usize, x: &[f64], y: &[f64]) -> f64 {
    let g = problem.component_gradient(i, y);
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    problem.component_value(i, x) - problem.component_value(i, y) - dot(&g, &diff)
}

/// `x*^i = x* − γ Σ_{j<i} ∇f_{π_j}(x*)` for `i = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitPoints {
    all: Vec<Vector>,
}

impl LimitPoints {
    /// The interior points `x*^1, …, x*^{n−1}`.
    pub fn points(&self) -> &[Vector] {
        let n = self.all.len() - 1;
        &self.all[1..n.max(1)]
    }

    /// `x*^i` for any `0 ≤ i ≤ n`.
    pub fn point(&self, i: usize) -> &Vector {
        &self.all[i]
    }
}

pub fn limit_points<P: Problem + ?Sized>(
    problem: &P,
    x_star: &Vector,
    gamma: f64,
    pi: &Permutation,
) -> Result<LimitPoints, AnalysisError> {
    check_minimizer(problem, x_star)?;
    if pi.len() != problem.num_components() {
        return Err(crate::shuffle::ShuffleError::BaseLength {
            expected: problem.num_components(),
            found: pi.len(),
        }
        .into());
    }
    Ok(limit_points_unchecked(problem, x_star, gamma, pi.as_slice()))
}

pub(crate) fn limit_points_unchecked<P: Problem + ?Sized>(
    problem: &P,
    x_star: &Vector,
    gamma: f64,
    pi: &[usize],
) -> LimitPoints {
    let mut all = Vec::with_capacity(pi.len() + 1);
    let mut cur = x_star.clone();
    all.push(cur.clone());
    let mut g = vec![0.0; x_star.dim()];
    for &j in pi {
        problem.component_gradient_into(j, x_star, &mut g);
        cur.axpy(-gamma, &g);
        all.push(cur.clone());
    }
    LimitPoints { all }
}

/// `σ*² = (1/n) Σ ‖∇f_i(x*)‖²`.
pub fn sigma_star_sq<P: Problem + ?Sized>(problem: &P, x_star: &[f64]) -> Result<f64, AnalysisError> {
    check_minimizer(problem, x_star)?;
    Ok(sigma_star_sq_unchecked(problem, x_star))
}

pub(crate) fn sigma_star_sq_unchecked<P: Problem + ?Sized>(problem: &P, x_star: &[f64]) -> f64 {
    let n = problem.num_components();
    if n == 1 {
        // ∇f_1(x*) = ∇f(x*) = 0; skip the rounding residue
        return 0.0;
    }
    (0..n)
        .map(|i| problem.component_gradient(i, x_star).norm_sq())
        .sum::<f64>()
        / n as f64
}

/// How the expectation over permutations is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimation {
    /// Exact for `n ≤ 8`, otherwise Monte Carlo with the given budget.
    Auto { num_perms: usize, seed: u64 },
    /// Exact enumeration; fails for `n > 8`.
    Exact,
    /// Monte Carlo even when enumeration would be feasible.
    MonteCarlo { num_perms: usize, seed: u64 },
}

impl Default for Estimation {
    fn default() -> Self {
        Estimation::Auto {
            num_perms: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Exact { permutations: usize },
    MonteCarlo { permutations: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub gamma: f64,
    pub sigma_star_sq: f64,
    pub sigma_shuffle_sq: f64,
    /// 95% half-width of the estimate; 0 when exact.
    pub ci_halfwidth: f64,
    pub sampling: Sampling,
    pub prop1_lower: f64,
    pub prop1_upper: f64,
    /// `E[D_{f_{π_i}}(x*^i, x*)] / γ` for `i = 1..n−1`.
    pub per_position: Vec<f64>,
    /// Position `i` attaining the maximum (0 when `n = 1`).
    pub worst_position: usize,
}

impl VarianceReport {
    /// Upper end of the confidence interval.
    pub fn upper(&self) -> f64 {
        self.sigma_shuffle_sq + self.ci_halfwidth
    }

    pub fn num_permutations(&self) -> usize {
        match self.sampling {
            Sampling::Exact { permutations } | Sampling::MonteCarlo { permutations } => permutations,
        }
    }
}

/// Gradients and values of every component at `x*`.
struct AtOptimum {
    grads: Vec<Vector>,
    values: Vec<f64>,
}

impl AtOptimum {
    fn new<P: Problem + ?Sized>(problem: &P, x_star: &[f64]) -> Self {
        let n = problem.num_components();
        AtOptimum {
            grads: (0..n).map(|i| problem.component_gradient(i, x_star)).collect(),
            values: (0..n).map(|i| problem.component_value(i, x_star)).collect(),
        }
    }

    /// Writes `D_{f_{π_i}}(x*^i, x*)` into `out[i − 1]` for `i = 1..n−1`.
    fn divergences<P: Problem + ?Sized>(
        &self,
        problem: &P,
        x_star: &[f64],
        gamma: f64,
        perm: &[usize],
        out: &mut [f64],
    ) {
        let mut point = Vector::from(x_star);
        let mut shift = vec![0.0; x_star.len()];
        for i in 1..perm.len() {
            let prev = perm[i - 1];
            point.axpy(-gamma, &self.grads[prev]);
            for (s, g) in shift.iter_mut().zip(self.grads[prev].iter()) {
                *s -= gamma * g;
            }
            let j = perm[i];
            out[i - 1] = problem.component_value(j, &point) - self.values[j] - dot(&self.grads[j], &shift);
        }
    }
}

/// `(γμn σ*²/8, γLn σ*²/4)`.
pub fn prop1_bounds(gamma: f64, mu: f64, l: f64, n: usize, sigma_star_sq: f64) -> (f64, f64) {
    let n = n as f64;
    (
        gamma * mu * n * sigma_star_sq / 8.0,
        gamma * l * n * sigma_star_sq / 4.0,
    )
}

/// Shuffling variance `max_{1≤i<n} E[D_{f_{π_i}}(x*^i, x*)] / γ`, exact by
/// enumeration for small `n` and by permutation Monte Carlo otherwise.
pub fn sigma_shuffle_sq<P: Problem + ?Sized>(
    problem: &P,
    x_star: &Vector,
    gamma: f64,
    estimation: Estimation,
) -> Result<VarianceReport, AnalysisError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(AnalysisError::InvalidParameter(format!(
            "step size must be positive, got {gamma}"
        )));
    }
    check_minimizer(problem, x_star)?;
    let n = problem.num_components();
    let constants = problem.constants();
    let sigma_star = sigma_star_sq_unchecked(problem, x_star);
    let (prop1_lower, prop1_upper) = prop1_bounds(gamma, constants.mu, constants.l, n, sigma_star);
    let exact = match estimation {
        Estimation::Exact => {
            if n > MAX_ENUMERATION_N {
                return Err(crate::shuffle::ShuffleError::TooLarge {
                    n,
                    max: MAX_ENUMERATION_N,
                }
                .into());
            }
            true
        }
        Estimation::Auto { num_perms, .. } => {
            if n > MAX_ENUMERATION_N && num_perms < 2 {
                return Err(AnalysisError::TooFewPermutations(num_perms));
            }
            n <= MAX_ENUMERATION_N
        }
        Estimation::MonteCarlo { num_perms, .. } => {
            if num_perms < 2 {
                return Err(AnalysisError::TooFewPermutations(num_perms));
            }
            false
        }
    };
    let report = |per_position: Vec<f64>, ci_per: Vec<f64>, sampling| {
        let (worst, best) = per_position
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let ci = ci_per.get(worst).copied().unwrap_or(0.0);
        VarianceReport {
            gamma,
            sigma_star_sq: sigma_star,
            sigma_shuffle_sq: best,
            ci_halfwidth: ci,
            sampling,
            prop1_lower,
            prop1_upper,
            worst_position: if per_position.is_empty() { 0 } else { worst + 1 },
            per_position,
        }
    };
    if n == 1 {
        return Ok(report(Vec::new(), Vec::new(), Sampling::Exact { permutations: 1 }));
    }
    let at = AtOptimum::new(problem, x_star);
    if exact {
        let means =
            enumerate_permutation_means(n, n - 1, |perm, out| at.divergences(problem, x_star, gamma, perm, out))?;
        let per: Vec<f64> = means.into_iter().map(|m| m / gamma).collect();
        let permutations = (1..=n).product();
        return Ok(report(per, Vec::new(), Sampling::Exact { permutations }));
    }
    let (num_perms, seed) = match estimation {
        Estimation::Auto { num_perms, seed } | Estimation::MonteCarlo { num_perms, seed } => (num_perms, seed),
        Estimation::Exact => unreachable!(),
    };
    let samples = sample_divergences(problem, x_star, gamma, &at, num_perms, seed);
    let m = num_perms as f64;
    let mut per = vec![0.0; n - 1];
    let mut ci = vec![0.0; n - 1];
    for i in 0..n - 1 {
        let mean = samples.iter().map(|s| s[i]).sum::<f64>() / m;
        let var = samples.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (m - 1.0);
        per[i] = mean / gamma;
        ci[i] = Z95 * (var / m).sqrt() / gamma;
    }
    Ok(report(
        per,
        ci,
        Sampling::MonteCarlo {
            permutations: num_perms,
        },
    ))
}

/// Per-permutation divergence vectors; permutation `p` uses stream `p` of `seed`.
fn sample_divergences<P: Problem + ?Sized>(
    problem: &P,
    x_star: &[f64],
    gamma: f64,
    at: &AtOptimum,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let n = problem.num_components();
    (0..count as u64)
        .into_par_iter()
        .map(|p| {
            let perm = sample_permutation(&mut stream_rng(seed, p), n);
            let mut out = vec![0.0; n.saturating_sub(1)];
            at.divergences(problem, x_star, gamma, perm.as_slice(), &mut out);
            out
        })
        .collect()
}

/// Empirical distribution of `max_i D_{f_{π_i}}(x*^i, x*) / γ` over `count`
/// sampled permutations.
pub fn shuffle_variance_samples<P: Problem + ?Sized>(
    problem: &P,
    x_star: &Vector,
    gamma: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>, AnalysisError> {
    if !(gamma > 0.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "step size must be positive, got {gamma}"
        )));
    }
    check_minimizer(problem, x_star)?;
    let at = AtOptimum::new(problem, x_star);
    Ok(sample_divergences(problem, x_star, gamma, &at, count, seed)
        .into_iter()
        .map(|d| d.into_iter().fold(0.0, f64::max) / gamma)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Quadratic, QuadraticSpec, Wavy};
    use crate::shuffle::for_each_permutation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quad(centers: &[f64]) -> Quadratic {
        Quadratic::new(QuadraticSpec::scalar(centers)).unwrap()
    }

    #[test]
    fn bregman_examples() {
        let q = quad(&[0.0]);
        assert_eq!(bregman(&q, 0, &[2.0], &[0.0]), 2.0);
        assert_eq!(bregman(&q, 0, &[1.5], &[1.5]), 0.0);
    }

    #[test]
    fn bregman_sandwich_on_quadratics() {
        let q = Quadratic::new(QuadraticSpec {
            centers: vec![Vector::from_vec(vec![1.0, -1.0]), Vector::from_vec(vec![0.0, 2.0])],
            curvatures: vec![0.5, 3.0],
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let d2 = crate::vector::dist_sq(&x, &y);
            for (i, &a) in [0.5, 3.0].iter().enumerate() {
                let d = bregman(&q, i, &x, &y);
                assert!((d - 0.5 * a * d2).abs() <= 1e-10 * (1.0 + d));
            }
        }
    }

    #[test]
    fn limit_point_examples() {
        let q = quad(&[0.0, 3.0, 6.0]);
        let x_star = Vector::scalar(3.0);
        let lp = limit_points(&q, &x_star, 0.1, &Permutation::identity(3)).unwrap();
        let pts: Vec<f64> = lp.points().iter().map(|p| p[0]).collect();
        assert!((pts[0] - 2.7).abs() < 1e-15 && (pts[1] - 2.7).abs() < 1e-15);
        assert!((lp.point(3)[0] - 3.0).abs() < 1e-15);
        let lp0 = limit_points(&q, &x_star, 0.0, &Permutation::new(vec![2, 0, 1]).unwrap()).unwrap();
        assert!(lp0.points().iter().all(|p| p[0] == 3.0));
        let same = quad(&[4.0, 4.0, 4.0]);
        let lp = limit_points(&same, &Vector::scalar(4.0), 0.3, &Permutation::identity(3)).unwrap();
        assert!(lp.points().iter().all(|p| p[0] == 4.0));
        assert!(matches!(
            limit_points(&q, &Vector::scalar(2.0), 0.1, &Permutation::identity(3)),
            Err(AnalysisError::NotAMinimizer { .. })
        ));
    }

    #[test]
    fn sigma_star_examples() {
        assert_eq!(sigma_star_sq(&quad(&[0.0, 3.0, 6.0]), &[3.0]).unwrap(), 6.0);
        assert_eq!(sigma_star_sq(&quad(&[1.0, 1.0]), &[1.0]).unwrap(), 0.0);
        assert_eq!(sigma_star_sq(&quad(&[5.0]), &[5.0]).unwrap(), 0.0);
    }

    #[test]
    fn shuffle_variance_examples() {
        let q = quad(&[0.0, 3.0, 6.0]);
        let x = Vector::scalar(3.0);
        let r = sigma_shuffle_sq(&q, &x, 0.1, Estimation::Exact).unwrap();
        assert!((r.sigma_shuffle_sq - 0.3).abs() < 1e-12);
        assert_eq!(r.ci_halfwidth, 0.0);
        assert_eq!(r.sampling, Sampling::Exact { permutations: 6 });
        assert!((r.prop1_lower - 0.225).abs() < 1e-12 && (r.prop1_upper - 0.45).abs() < 1e-12);
        let r2 = sigma_shuffle_sq(&q, &x, 0.2, Estimation::default()).unwrap();
        assert!((r2.sigma_shuffle_sq - 0.6).abs() < 1e-12);
        let same = sigma_shuffle_sq(&quad(&[2.0; 4]), &Vector::scalar(2.0), 0.5, Estimation::Exact).unwrap();
        assert_eq!(same.sigma_shuffle_sq, 0.0);
        let single = sigma_shuffle_sq(&quad(&[2.0]), &Vector::scalar(2.0), 0.5, Estimation::Exact).unwrap();
        assert_eq!(single.sigma_shuffle_sq, 0.0);
        assert!(matches!(
            sigma_shuffle_sq(&q, &x, 0.1, Estimation::MonteCarlo { num_perms: 1, seed: 0 }),
            Err(AnalysisError::TooFewPermutations(1))
        ));
    }

    #[test]
    fn monte_carlo_brackets_exact() {
        let q = quad(&[0.0, 1.0, 5.0, -2.0, 3.0, 7.0]);
        let x = q.closed_form_minimizer().unwrap();
        let exact = sigma_shuffle_sq(&q, &x, 0.1, Estimation::Exact).unwrap();
        let mc = sigma_shuffle_sq(
            &q,
            &x,
            0.1,
            Estimation::MonteCarlo {
                num_perms: 20_000,
                seed: 3,
            },
        )
        .unwrap();
        assert!((mc.sigma_shuffle_sq - exact.sigma_shuffle_sq).abs() <= 2.0 * mc.ci_halfwidth);
        assert!(mc.ci_halfwidth > 0.0);
        let again = sigma_shuffle_sq(
            &q,
            &x,
            0.1,
            Estimation::MonteCarlo {
                num_perms: 20_000,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(mc, again);
        let samples = shuffle_variance_samples(&q, &x, 0.1, 100, 3).unwrap();
        assert_eq!(samples.len(), 100);
        assert!(samples.iter().all(|&s| s >= 0.0));
    }

    /// Brute-force oracle: explicit limit points and Bregman divergences.
    fn brute_force(q: &dyn Problem, x: &Vector, gamma: f64) -> f64 {
        let n = q.num_components();
        let mut sums = vec![0.0; n.saturating_sub(1)];
        let mut count = 0.0;
        for_each_permutation(n, |p| {
            let lp = limit_points_unchecked(q, x, gamma, p);
            for i in 1..n {
                sums[i - 1] += bregman(q, p[i], lp.point(i), x);
            }
            count += 1.0;
        });
        sums.iter().fold(0.0, |m, s| f64::max(m, s / count / gamma))
    }

    proptest! {
        #[test]
        fn unit_curvature_closed_form(centers in prop::collection::vec(-10.0f64..10.0, 2..=6), gamma in 0.01f64..1.0) {
            let q = quad(&centers);
            let x = q.closed_form_minimizer().unwrap();
            let n = centers.len();
            let s2 = sigma_star_sq(&q, &x).unwrap();
            let r = sigma_shuffle_sq(&q, &x, gamma, Estimation::Exact).unwrap();
            let factor = (1..n).map(|i| (i * (n - i)) as f64 / (2.0 * (n - 1) as f64)).fold(0.0, f64::max);
            let closed = gamma * factor * s2;
            prop_assert!((r.sigma_shuffle_sq - closed).abs() <= 1e-10 * (1.0 + closed));
            let doubled = sigma_shuffle_sq(&q, &x, 2.0 * gamma, Estimation::Exact).unwrap();
            prop_assert!((doubled.sigma_shuffle_sq - 2.0 * r.sigma_shuffle_sq).abs() <= 1e-10 * (1.0 + closed));
        }

        #[test]
        fn matches_brute_force_and_sandwich(
            centers in prop::collection::vec(-5.0f64..5.0, 2..=5),
            curv in prop::collection::vec(0.2f64..3.0, 5),
            amp in 0.0f64..0.8,
            gamma_frac in 0.05f64..1.0,
        ) {
            let n = centers.len();
            let q = Quadratic::new(QuadraticSpec {
                centers: centers.iter().map(|&c| Vector::scalar(c)).collect(),
                curvatures: curv[..n].to_vec(),
            }).unwrap();
            let x = crate::optim::solve_reference(&q, None, None).unwrap().x;
            let c = q.constants();
            let gamma = gamma_frac / c.l;
            let r = sigma_shuffle_sq(&q, &x, gamma, Estimation::Exact).unwrap();
            let oracle = brute_force(&q, &x, gamma);
            prop_assert!((r.sigma_shuffle_sq - oracle).abs() <= 1e-9 * (1.0 + oracle));
            prop_assert!(r.prop1_lower <= r.sigma_shuffle_sq * (1.0 + 1e-9) + 1e-15);
            prop_assert!(r.sigma_shuffle_sq <= r.prop1_upper * (1.0 + 1e-9) + 1e-15);

            // a non-quadratic strongly convex family
            let w = Wavy::scalar(&centers, amp).unwrap();
            let xw = crate::optim::solve_reference(&w, None, None).unwrap().x;
            let cw = w.constants();
            let gw = gamma_frac / cw.l;
            let rw = sigma_shuffle_sq(&w, &xw, gw, Estimation::Exact).unwrap();
            prop_assert!((rw.sigma_shuffle_sq - brute_force(&w, &xw, gw)).abs() <= 1e-9 * (1.0 + rw.sigma_shuffle_sq));
            prop_assert!(rw.prop1_lower <= rw.sigma_shuffle_sq * (1.0 + 1e-9) + 1e-15);
            prop_assert!(rw.sigma_shuffle_sq <= rw.prop1_upper * (1.0 + 1e-9) + 1e-15);
        }
    }
}
