use crate::vector::{dist_sq, Vector};

use super::{ConvexityClass, Problem, ProblemConstants, ProblemError};

/// Components `f_i(x) = (a_i / 2) ‖x − b_i‖²`.
#[derive(Debug, Clone)]
pub struct QuadraticSpec {
    pub centers: Vec<Vector>,
    pub curvatures: Vec<f64>,
}

impl QuadraticSpec {
    /// Unit curvature on every component.
    pub fn uniform(centers: Vec<Vector>) -> Self {
        let curvatures = vec![1.0; centers.len()];
        QuadraticSpec { centers, curvatures }
    }

    /// One-dimensional unit-curvature quadratic with the given centers.
    pub fn scalar(centers: &[f64]) -> Self {
        Self::uniform(centers.iter().map(|&c| Vector::scalar(c)).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Quadratic {
    centers: Vec<Vector>,
    curvatures: Vec<f64>,
    dim: usize,
    constants: ProblemConstants,
}

impl Quadratic {
    pub fn new(spec: QuadraticSpec) -> Result<Self, ProblemError> {
        let QuadraticSpec { centers, curvatures } = spec;
        let first = centers.first().ok_or(ProblemError::Empty)?;
        let dim = first.dim();
        if dim == 0 {
            return Err(ProblemError::InvalidParameter("dimension must be positive".into()));
        }
        if let Some(bad) = centers.iter().find(|c| c.dim() != dim) {
            return Err(ProblemError::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        if curvatures.len() != centers.len() {
            return Err(ProblemError::InvalidParameter(format!(
                "{} curvatures for {} centers",
                curvatures.len(),
                centers.len()
            )));
        }
        if curvatures.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(ProblemError::InvalidParameter(
                "curvatures must be positive and finite".into(),
            ));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(ProblemError::InvalidParameter("centers must be finite".into()));
        }
        let l = curvatures.iter().cloned().fold(f64::MIN, f64::max);
        let mu = curvatures.iter().cloned().fold(f64::MAX, f64::min);
        let constants = ProblemConstants::new(l, mu, ConvexityClass::EachStronglyConvex)?;
        Ok(Quadratic {
            centers,
            curvatures,
            dim,
            constants,
        })
    }

    pub fn centers(&self) -> &[Vector] {
        &self.centers
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.curvatures
    }

    pub fn has_uniform_curvature(&self) -> bool {
        self.curvatures.iter().all(|&a| a == self.curvatures[0])
    }

    /// Curvature-weighted mean of the centers, the exact minimizer of `f`.
    pub fn minimizer(&self) -> Vector {
        let total: f64 = self.curvatures.iter().sum();
        let mut x = Vector::zeros(self.dim);
        for (c, &a) in self.centers.iter().zip(&self.curvatures) {
            x.axpy(a / total, c);
        }
        x
    }
}

impl Problem for Quadratic {
    fn num_components(&self) -> usize {
        self.centers.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        0.5 * self.curvatures[i] * dist_sq(x, &self.centers[i])
    }

    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let a = self.curvatures[i];
        for ((o, xi), bi) in out.iter_mut().zip(x).zip(self.centers[i].iter()) {
            *o = a * (xi - bi);
        }
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }

    fn component_infima(&self) -> Option<Vec<f64>> {
        Some(vec![0.0; self.centers.len()])
    }

    fn closed_form_minimizer(&self) -> Option<Vector> {
        self.has_uniform_curvature().then(|| self.minimizer())
    }
}
