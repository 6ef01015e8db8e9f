use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::Dataset;
use crate::vector::norm_sq;

use super::{ConvexityClass, Problem, ProblemConstants, ProblemError};

const POWER_ITERATION_TOL: f64 = 1e-8;
const POWER_ITERATION_CAP: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("power iteration for the spectral norm did not converge in {iterations} iterations")]
pub struct SpectralNormError {
    pub iterations: usize,
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[derive(Debug, Clone)]
pub struct LogisticSpec {
    pub dataset: Dataset,
    pub lambda: f64,
}

/// ℓ2-regularized logistic regression with one component per sample; the
/// regularizer `(λ/2)‖x‖²` is replicated in every component.
#[derive(Debug, Clone)]
pub struct Logistic {
    dataset: Dataset,
    lambda: f64,
    l_f: f64,
    l_max: f64,
}

impl Logistic {
    pub fn new(spec: LogisticSpec) -> Result<Self, ProblemError> {
        let LogisticSpec { dataset, lambda } = spec;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ProblemError::InvalidParameter(format!(
                "regularizer must be nonnegative, got {lambda}"
            )));
        }
        if dataset.num_samples() == 0 {
            return Err(ProblemError::Empty);
        }
        if dataset.features.nrows() != dataset.labels.len() {
            return Err(ProblemError::DimensionMismatch {
                expected: dataset.labels.len(),
                found: dataset.features.nrows(),
            });
        }
        if dataset.dim() == 0 {
            return Err(ProblemError::InvalidParameter("dimension must be positive".into()));
        }
        if let Some((sample, &label)) = dataset.labels.iter().enumerate().find(|(_, &b)| b != 0.0 && b != 1.0) {
            return Err(ProblemError::InvalidLabel { sample, label });
        }
        let n = dataset.num_samples() as f64;
        let spectral_sq = spectral_norm_sq(&dataset)?;
        let l_f = spectral_sq / (4.0 * n) + lambda;
        let l_max = (0..dataset.num_samples())
            .map(|i| dataset.features.row_norm_sq(i))
            .fold(0.0, f64::max)
            + lambda;
        Ok(Logistic {
            dataset,
            lambda,
            l_f,
            l_max,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `‖A‖²/(4N) + λ`, the smoothness of the full objective.
    pub fn l_f(&self) -> f64 {
        self.l_f
    }

    /// `max_i ‖a_i‖² + λ`, the bound used for individual losses.
    pub fn l_max(&self) -> f64 {
        self.l_max
    }
}

/// Largest eigenvalue of `AᵀA` by power iteration.
fn spectral_norm_sq(dataset: &Dataset) -> Result<f64, SpectralNormError> {
    let a = &dataset.features;
    let d = a.ncols();
    // deterministic start with no exact symmetry to stall on
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..1.5)).collect();
    let v_norm = norm_sq(&v).sqrt();
    v.iter_mut().for_each(|x| *x /= v_norm);
    let mut av = vec![0.0; a.nrows()];
    let mut w = vec![0.0; d];
    let mut estimate = 0.0;
    for it in 0..POWER_ITERATION_CAP {
        a.mul_vec(&v, &mut av);
        a.mul_t_vec(&av, &mut w);
        let norm = norm_sq(&w).sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = norm;
        w.iter_mut().for_each(|x| *x /= norm);
        std::mem::swap(&mut v, &mut w);
        if it > 0 && (next - estimate).abs() <= POWER_ITERATION_TOL * next {
            return Ok(next);
        }
        estimate = next;
    }
    Err(SpectralNormError {
        iterations: POWER_ITERATION_CAP,
    })
}

impl Problem for Logistic {
    fn num_components(&self) -> usize {
        self.dataset.num_samples()
    }

    fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let z = self.dataset.features.row_dot(i, x);
        let b = self.dataset.labels[i];
        // −(b log h(z) + (1−b) log(1−h(z))) = softplus(z) − b z
        softplus(z) - b * z + 0.5 * self.lambda * norm_sq(x)
    }

    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let z = self.dataset.features.row_dot(i, x);
        let r = sigmoid(z) - self.dataset.labels[i];
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.lambda * xi;
        }
        let (idx, val) = self.dataset.features.row(i);
        for (&j, v) in idx.iter().zip(val) {
            out[j] += r * v;
        }
    }

    fn constants(&self) -> ProblemConstants {
        let l = self.l_f.max(self.l_max);
        let (mu, class) = if self.lambda > 0.0 {
            (self.lambda, ConvexityClass::EachStronglyConvex)
        } else {
            (0.0, ConvexityClass::Convex)
        };
        ProblemConstants::new(l, mu.min(l), class).expect("logistic constants are valid")
    }

    fn component_infima(&self) -> Option<Vec<f64>> {
        // every loss is nonnegative
        Some(vec![0.0; self.num_components()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_classification, CsrMatrix};
    use crate::problem::testing::*;

    fn single(a: f64, b: f64, lambda: f64) -> Logistic {
        Logistic::new(LogisticSpec {
            dataset: Dataset {
                features: CsrMatrix::from_dense(&[vec![a]]),
                labels: vec![b],
            },
            lambda,
        })
        .unwrap()
    }

    #[test]
    fn value_and_gradient_at_origin() {
        let p = single(3.0, 1.0, 0.0);
        assert!((p.component_value(0, &[0.0]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(p.component_gradient(0, &[0.0]).as_slice(), &[-1.5]);
        let p = single(3.0, 0.0, 0.0);
        assert!((p.component_value(0, &[0.0]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradient_with_regularizer() {
        let p = single(1.0, 1.0, 0.1);
        let g = p.component_gradient(0, &[1.0])[0];
        // h(1) = 0.7310585786300049
        let expected = (0.731_058_578_630_004_9 - 1.0) + 0.1;
        assert!((g - expected).abs() < 1e-12);
        assert!((g - (-0.16894)).abs() < 1e-5);
    }

    #[test]
    fn smoothness_constants() {
        let p = single(2.0, 1.0, 0.0);
        assert_eq!(p.l_max(), 4.0);
        // ‖A‖² = 4, N = 1
        assert!((p.l_f() - 1.0).abs() < 1e-12);
        let q = single(2.0, 1.0, 0.5);
        assert!((q.l_max() - p.l_max() - 0.5).abs() < 1e-15);
        assert!((q.l_f() - p.l_f() - 0.5).abs() < 1e-12);
        assert_eq!(q.constants().mu, 0.5);
        assert_eq!(q.constants().convexity, ConvexityClass::EachStronglyConvex);
        assert_eq!(p.constants().convexity, ConvexityClass::Convex);
    }

    #[test]
    fn spectral_norm_matches_dense_eigenvalue() {
        // AᵀA = [[2,1],[1,2]] for rows (1,1),(1,0),(0,1) -> eigenvalues 3,1
        let ds = Dataset {
            features: CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]]),
            labels: vec![1.0, 0.0, 1.0],
        };
        assert!((spectral_norm_sq(&ds).unwrap() - 3.0).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_labels() {
        let err = Logistic::new(LogisticSpec {
            dataset: Dataset {
                features: CsrMatrix::from_dense(&[vec![1.0], vec![2.0]]),
                labels: vec![1.0, -1.0],
            },
            lambda: 0.0,
        })
        .unwrap_err();
        assert_eq!(err, ProblemError::InvalidLabel { sample: 1, label: -1.0 });
        assert!(Logistic::new(LogisticSpec {
            dataset: Dataset {
                features: CsrMatrix::from_dense(&[vec![1.0]]),
                labels: vec![1.0, 0.0],
            },
            lambda: 0.0,
        })
        .is_err());
    }

    #[test]
    fn extreme_margins_stay_finite() {
        let p = single(1.0, 1.0, 0.0);
        assert!(p.component_value(0, &[-800.0]).is_finite());
        assert!(p.component_value(0, &[800.0]).is_finite());
        assert!(p.component_gradient(0, &[-800.0]).is_finite());
    }

    #[test]
    fn oracle_properties() {
        let ds = synthetic_classification(12, 3, 5);
        let p = Logistic::new(LogisticSpec {
            dataset: ds,
            lambda: 0.05,
        })
        .unwrap();
        assert_gradients_match_fd(&p, 10, 2.0);
        assert_mean_consistency(&p, 10);
        assert_lipschitz(&p, 1000, 5.0);
    }
}
