//! LIBSVM ingestion, minibatch grouping and the experiment-protocol constants.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::shuffle::Permutation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}, column {column}: malformed token `{token}`")]
    MalformedToken { line: usize, column: usize, token: String },
    #[error("line {line}, column {column}: cannot parse real `{token}`")]
    BadReal { line: usize, column: usize, token: String },
    #[error("line {line}, column {column}: non-increasing index {index} after {previous}")]
    NonIncreasingIndex {
        line: usize,
        column: usize,
        index: usize,
        previous: usize,
    },
    #[error("line {line}: label {label} is not one of -1, 0, 1")]
    BadLabel { line: usize, label: f64 },
    #[error("line {line}, column {column}: index {index} exceeds dimension {dim}")]
    IndexExceedsDim {
        line: usize,
        column: usize,
        index: usize,
        dim: usize,
    },
    #[error("input contains no samples")]
    Empty,
    #[error("input has no features; pass an explicit dimension")]
    NoFeatures,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("minibatch size {tau} must lie in [1, {n}]")]
    BadBatchSize { tau: usize, n: usize },
    #[error("ordering has length {found}, expected {expected}")]
    OrderingLength { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsrMatrix {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    ncols: usize,
}

impl CsrMatrix {
    pub fn new(ncols: usize) -> Self {
        CsrMatrix {
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            ncols,
        }
    }

    /// Builds from dense rows, dropping exact zeros.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut m = CsrMatrix::new(ncols);
        for row in rows {
            let entries: Vec<(usize, f64)> = row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .collect();
            m.push_row(&entries);
        }
        m
    }

    /// Appends a row of `(column, value)` pairs with strictly increasing columns.
    pub fn push_row(&mut self, entries: &[(usize, f64)]) {
        for &(j, v) in entries {
            debug_assert!(j < self.ncols);
            self.indices.push(j);
            self.values.push(v);
        }
        self.indptr.push(self.indices.len());
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn set_ncols(&mut self, ncols: usize) {
        debug_assert!(self.indices.iter().all(|&j| j < ncols));
        self.ncols = ncols;
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&j, v)| v * x[j]).sum()
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row(i).1.iter().map(|v| v * v).sum()
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row_dot(i, x);
        }
    }

    /// `x = Aᵀ y`
    pub fn mul_t_vec(&self, y: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        for (i, yi) in y.iter().enumerate() {
            let (idx, val) = self.row(i);
            for (&j, v) in idx.iter().zip(val) {
                x[j] += v * yi;
            }
        }
    }
}

/// Labelled samples `(a_i, b_i)` with `b_i ∈ {0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: CsrMatrix,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LibsvmOptions {
    /// Overrides the dimension inferred from the largest index.
    pub dim: Option<usize>,
}

/// Parses LIBSVM text: one `<label> <idx>:<val> ...` sample per nonempty line,
/// 1-based strictly increasing indices.
///
/// Columns in error reports count whitespace-separated fields, the label
/// being field 0.
pub fn parse_libsvm(text: &str) -> Result<Dataset, ParseError> {
    parse_libsvm_with(text, LibsvmOptions::default())
}

pub fn parse_libsvm_with(text: &str, options: LibsvmOptions) -> Result<Dataset, ParseError> {
    let mut labels = Vec::new();
    let mut features = CsrMatrix::new(0);
    let mut max_index = 0usize;
    let mut row = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let mut fields = line.split_whitespace();
        let Some(label_tok) = fields.next() else {
            continue;
        };
        let label: f64 = parse_real(label_tok, line_no, 0)?;
        let label = match label {
            1.0 => 1.0,
            l if l == 0.0 || l == -1.0 => 0.0,
            l => {
                return Err(ParseError::BadLabel {
                    line: line_no,
                    label: l,
                })
            }
        };
        row.clear();
        let mut previous = 0usize;
        for (k, tok) in fields.enumerate() {
            let column = k + 1;
            let malformed = || ParseError::MalformedToken {
                line: line_no,
                column,
                token: tok.to_string(),
            };
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(malformed)?;
            if idx_str.is_empty() || !idx_str.bytes().all(|b| b.is_ascii_digit()) {
                return Err(malformed());
            }
            let index: usize = idx_str.parse().map_err(|_| malformed())?;
            if index == 0 {
                return Err(malformed());
            }
            if index <= previous {
                return Err(ParseError::NonIncreasingIndex {
                    line: line_no,
                    column,
                    index,
                    previous,
                });
            }
            if let Some(dim) = options.dim {
                if index > dim {
                    return Err(ParseError::IndexExceedsDim {
                        line: line_no,
                        column,
                        index,
                        dim,
                    });
                }
            }
            let value = parse_real(val_str, line_no, column)?;
            previous = index;
            max_index = max_index.max(index);
            row.push((index - 1, value));
        }
        // columns are fixed up once the dimension is known
        for &(j, v) in &row {
            features.indices.push(j);
            features.values.push(v);
        }
        features.indptr.push(features.indices.len());
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(ParseError::Empty);
    }
    let dim = options.dim.unwrap_or(max_index);
    if dim == 0 {
        return Err(ParseError::NoFeatures);
    }
    features.ncols = dim;
    Ok(Dataset { features, labels })
}

fn parse_real(tok: &str, line: usize, column: usize) -> Result<f64, ParseError> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError::BadReal {
            line,
            column,
            token: tok.to_string(),
        }),
    }
}

/// Shortest decimal text that parses back to exactly `v`, using exponent
/// notation only when it is shorter.
pub fn format_real(v: f64) -> String {
    let plain = format!("{v}");
    let sci = format!("{v:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

/// Writes the dataset back as LIBSVM text with `0`/`1` labels and
/// shortest round-trip decimal values.
pub fn serialize_libsvm(dataset: &Dataset) -> String {
    let mut out = String::new();
    for (i, &label) in dataset.labels.iter().enumerate() {
        let _ = write!(out, "{}", if label == 1.0 { 1 } else { 0 });
        let (idx, val) = dataset.features.row(i);
        for (&j, v) in idx.iter().zip(val) {
            let _ = write!(out, " {}:{}", j + 1, format_real(*v));
        }
        out.push('\n');
    }
    out
}

/// Index groups of a finite sum split into minibatches.
#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchPartition {
    pub groups: Vec<Vec<usize>>,
    pub tau: usize,
}

impl MinibatchPartition {
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }
}

/// Cuts `ordering` into `⌈N/τ⌉` contiguous groups: `n − 1` groups of size `τ`
/// and the remainder in the last one.
pub fn group_minibatches(
    n_samples: usize,
    tau: usize,
    ordering: &Permutation,
) -> Result<MinibatchPartition, DataError> {
    if tau == 0 || tau > n_samples {
        return Err(DataError::BadBatchSize { tau, n: n_samples });
    }
    if ordering.len() != n_samples {
        return Err(DataError::OrderingLength {
            expected: n_samples,
            found: ordering.len(),
        });
    }
    let groups = ordering.as_slice().chunks(tau).map(|c| c.to_vec()).collect();
    Ok(MinibatchPartition { groups, tau })
}

/// Smoothness of a size-`τ` minibatch interpolating between `L_max` (τ = 1)
/// and `L_f` (τ = n).
pub fn batch_smoothness(l_f: f64, l_max: f64, n_samples: usize, tau: usize) -> Result<f64, DataError> {
    if n_samples < 2 {
        return Err(DataError::InvalidParameter(format!(
            "batch smoothness needs at least 2 samples, got {n_samples}"
        )));
    }
    if tau == 0 || tau > n_samples {
        return Err(DataError::BadBatchSize { tau, n: n_samples });
    }
    let n = n_samples as f64;
    let t = tau as f64;
    let denom = t * (n - 1.0);
    Ok(n * (t - 1.0) / denom * l_f + (n - t) / denom * l_max)
}

/// `λ = L / √N`.
pub fn default_regularizer(l: f64, n_samples: usize) -> f64 {
    l / (n_samples as f64).sqrt()
}

/// Dense Gaussian features with labels drawn from a logistic model around a
/// random planted separator.
pub fn synthetic_classification(n_samples: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut features = CsrMatrix::new(dim);
    let mut labels = Vec::with_capacity(n_samples);
    let scale = 1.0 / (dim as f64).sqrt();
    for _ in 0..n_samples {
        let row: Vec<(usize, f64)> = (0..dim)
            .map(|j| (j, scale * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let z: f64 = row.iter().map(|(j, v)| planted[*j] * v).sum::<f64>() * 2.0;
        let p = crate::problem::sigmoid(z);
        labels.push(if rng.gen::<f64>() < p { 1.0 } else { 0.0 });
        features.push_row(&row);
    }
    Dataset { features, labels }
}
