use crate::vector::{dist_sq, Vector};

use super::{ConvexityClass, Problem, ProblemConstants, ProblemError};

/// Components `f_i(x) = ½‖x − b_i‖² + c Σ_j cos(x_j − b_ij)`.
///
/// The Hessian of each component lies in `[1 − |c|, 1 + |c|]` coordinatewise,
/// so the family is strongly convex for `|c| < 1`, convex at `|c| = 1` and
/// nonconvex beyond. Component gradient deviations stay bounded, which makes
/// the bounded-variance (`A = 0`) branch applicable.
#[derive(Debug, Clone)]
pub struct Wavy {
    centers: Vec<Vector>,
    amplitude: f64,
    dim: usize,
    constants: ProblemConstants,
}

impl Wavy {
    pub fn new(centers: Vec<Vector>, amplitude: f64) -> Result<Self, ProblemError> {
        let dim = centers.first().ok_or(ProblemError::Empty)?.dim();
        if dim == 0 {
            return Err(ProblemError::InvalidParameter("dimension must be positive".into()));
        }
        if let Some(bad) = centers.iter().find(|c| c.dim() != dim) {
            return Err(ProblemError::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        if !amplitude.is_finite() || centers.iter().any(|c| !c.is_finite()) {
            return Err(ProblemError::InvalidParameter("parameters must be finite".into()));
        }
        let c = amplitude.abs();
        let l = 1.0 + c;
        let (mu, class) = if c < 1.0 {
            (1.0 - c, ConvexityClass::EachStronglyConvex)
        } else if c == 1.0 {
            (0.0, ConvexityClass::Convex)
        } else {
            (0.0, ConvexityClass::Nonconvex)
        };
        let constants = ProblemConstants::new(l, mu, class)?;
        Ok(Wavy {
            centers,
            amplitude,
            dim,
            constants,
        })
    }

    pub fn scalar(centers: &[f64], amplitude: f64) -> Result<Self, ProblemError> {
        Self::new(centers.iter().map(|&c| Vector::scalar(c)).collect(), amplitude)
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn centers(&self) -> &[Vector] {
        &self.centers
    }
}

/// `min_z ½z² + c cos z`.
fn scalar_infimum(c: f64) -> f64 {
    if c <= 1.0 {
        // z = 0 is the global minimizer: ½z² ≥ c(1 − cos z) for c ≤ 1
        return c;
    }
    // nonzero minimizer solves z = c sin z on (0, π); bisection on z − c sin z
    let (mut lo, mut hi) = (1e-12_f64, std::f64::consts::PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid - c * mid.sin() < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = 0.5 * (lo + hi);
    0.5 * z * z + c * z.cos()
}

impl Problem for Wavy {
    fn num_components(&self) -> usize {
        self.centers.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let b = &self.centers[i];
        let waves: f64 = x.iter().zip(b.iter()).map(|(xi, bi)| (xi - bi).cos()).sum();
        0.5 * dist_sq(x, b) + self.amplitude * waves
    }

    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        for ((o, xi), bi) in out.iter_mut().zip(x).zip(self.centers[i].iter()) {
            let z = xi - bi;
            *o = z - self.amplitude * z.sin();
        }
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }

    fn component_infima(&self) -> Option<Vec<f64>> {
        let m = self.dim as f64 * scalar_infimum(self.amplitude);
        Some(vec![m; self.centers.len()])
    }
}
