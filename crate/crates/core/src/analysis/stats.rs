/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// Sample mean with a 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub ci: f64,
    pub count: usize,
}

impl MeanCi {
    pub fn lower(&self) -> f64 {
        self.mean - self.ci
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci
    }
}

/// Mean and `1.96 s / √m`; the half-width is 0 for fewer than two samples.
pub fn mean_ci(xs: &[f64]) -> MeanCi {
    let m = xs.len();
    if m == 0 {
        return MeanCi {
            mean: f64::NAN,
            ci: f64::NAN,
            count: 0,
        };
    }
    let mean = xs.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return MeanCi {
            mean,
            ci: 0.0,
            count: m,
        };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    MeanCi {
        mean,
        ci: Z95 * (var / m as f64).sqrt(),
        count: m,
    }
}
