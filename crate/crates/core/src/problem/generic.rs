use super::{Problem, ProblemConstants, ProblemError};

pub type ValueFn = Box<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Box<dyn Fn(usize, &[f64], &mut [f64]) + Send + Sync>;

/// A finite sum described by closures. The caller vouches for the constants.
pub struct FnProblem {
    n: usize,
    dim: usize,
    value: ValueFn,
    gradient: GradientFn,
    constants: ProblemConstants,
    infima: Option<Vec<f64>>,
}

impl FnProblem {
    pub fn new(
        n: usize,
        dim: usize,
        value: ValueFn,
        gradient: GradientFn,
        constants: ProblemConstants,
    ) -> Result<Self, ProblemError> {
        if n == 0 {
            return Err(ProblemError::Empty);
        }
        if dim == 0 {
            return Err(ProblemError::InvalidParameter("dimension must be positive".into()));
        }
        Ok(FnProblem {
            n,
            dim,
            value,
            gradient,
            constants,
            infima: None,
        })
    }

    pub fn with_infima(mut self, infima: Vec<f64>) -> Result<Self, ProblemError> {
        if infima.len() != self.n {
            return Err(ProblemError::DimensionMismatch {
                expected: self.n,
                found: infima.len(),
            });
        }
        self.infima = Some(infima);
        Ok(self)
    }
}

impl std::fmt::Debug for FnProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnProblem")
            .field("n", &self.n)
            .field("dim", &self.dim)
            .field("constants", &self.constants)
            .finish_non_exhaustive()
    }
}

impl Problem for FnProblem {
    fn num_components(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        (self.value)(i, x)
    }

    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        (self.gradient)(i, x, out)
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }

    fn component_infima(&self) -> Option<Vec<f64>> {
        self.infima.clone()
    }
}
