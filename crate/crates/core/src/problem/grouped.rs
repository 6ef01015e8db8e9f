use crate::data::MinibatchPartition;
use crate::vector::Vector;

use super::{Problem, ProblemConstants, ProblemError};

/// Finite sum whose components are minibatch means of an underlying
/// sample-level problem. Each group is averaged over its own size, so `f`
/// stays a uniform mean over groups.
#[derive(Debug, Clone)]
pub struct Grouped<P> {
    inner: P,
    groups: Vec<Vec<usize>>,
}

impl<P: Problem> Grouped<P> {
    pub fn new(inner: P, partition: MinibatchPartition) -> Result<Self, ProblemError> {
        let n = inner.num_components();
        if partition.groups.is_empty() || partition.groups.iter().any(|g| g.is_empty()) {
            return Err(ProblemError::Empty);
        }
        let mut seen = vec![false; n];
        for &i in partition.groups.iter().flatten() {
            if i >= n {
                return Err(ProblemError::IndexOutOfRange { index: i, n });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(ProblemError::InvalidParameter(format!(
                    "sample {i} appears in two groups"
                )));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(ProblemError::InvalidParameter(
                "groups do not cover every sample".into(),
            ));
        }
        Ok(Grouped {
            inner,
            groups: partition.groups,
        })
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

impl<P: Problem> Problem for Grouped<P> {
    fn num_components(&self) -> usize {
        self.groups.len()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        self.inner.batch_value(&self.groups[i], x)
    }

    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.inner.batch_gradient_into(&self.groups[i], x, out)
    }

    /// Means of `L`-smooth, `μ`-strongly convex samples keep both constants.
    fn constants(&self) -> ProblemConstants {
        self.inner.constants()
    }

    fn component_infima(&self) -> Option<Vec<f64>> {
        let inner = self.inner.component_infima()?;
        Some(
            self.groups
                .iter()
                .map(|g| g.iter().map(|&i| inner[i]).sum::<f64>() / g.len() as f64)
                .collect(),
        )
    }

    fn closed_form_minimizer(&self) -> Option<Vector> {
        let size = self.groups[0].len();
        if self.groups.iter().all(|g| g.len() == size) {
            self.inner.closed_form_minimizer()
        } else {
            None
        }
    }
}

macro_rules! forward_problem {
    ($($ty:ty),*) => {$(
        impl<P: Problem + ?Sized> Problem for $ty {
            fn num_components(&self) -> usize { (**self).num_components() }
            fn dim(&self) -> usize { (**self).dim() }
            fn component_value(&self, i: usize, x: &[f64]) -> f64 { (**self).component_value(i, x) }
            fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
                (**self).component_gradient_into(i, x, out)
            }
            fn constants(&self) -> ProblemConstants { (**self).constants() }
            fn component_infima(&self) -> Option<Vec<f64>> { (**self).component_infima() }
            fn closed_form_minimizer(&self) -> Option<Vector> { (**self).closed_form_minimizer() }
            fn value(&self, x: &[f64]) -> f64 { (**self).value(x) }
            fn gradient_into(&self, x: &[f64], out: &mut [f64]) { (**self).gradient_into(x, out) }
            fn batch_gradient_into(&self, indices: &[usize], x: &[f64], out: &mut [f64]) {
                (**self).batch_gradient_into(indices, x, out)
            }
            fn batch_value(&self, indices: &[usize], x: &[f64]) -> f64 { (**self).batch_value(indices, x) }
        }
    )*};
}

forward_problem!(&P, Box<P>, std::sync::Arc<P>);
