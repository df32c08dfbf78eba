use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::linalg::DenseMatrix;

/// Simplex tolerance for probability vectors.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// One row per class: the mean softmax vector over that class's samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseMatrix", into = "DenseMatrix")]
pub struct IndicatorMatrix {
    vectors: DenseMatrix,
}

impl IndicatorMatrix {
    /// Wraps a `K × K` matrix after checking every row is a probability vector.
    pub fn new(vectors: DenseMatrix) -> Result<Self, ClusterError> {
        if !vectors.is_square() {
            return Err(ClusterError::InvalidArgument(format!(
                "indicator matrix must be square, got {}x{}",
                vectors.rows(),
                vectors.cols()
            )));
        }
        for i in 0..vectors.rows() {
            check_simplex(vectors.row(i))
                .map_err(|reason| ClusterError::BadProbability { index: i, reason })?;
        }
        Ok(Self { vectors })
    }

    pub fn num_classes(&self) -> usize {
        self.vectors.rows()
    }

    pub fn vectors(&self) -> &DenseMatrix {
        &self.vectors
    }

    pub fn row(&self, class: usize) -> &[f64] {
        self.vectors.row(class)
    }

    /// Applies a class relabeling: new class `i` is old class `order[i]`,
    /// with columns permuted the same way.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let k = self.num_classes();
        let mut out = DenseMatrix::zeros(k, k);
        for (ni, &oi) in order.iter().enumerate() {
            for (nj, &oj) in order.iter().enumerate() {
                out[(ni, nj)] = self.vectors[(oi, oj)];
            }
        }
        Self { vectors: out }
    }
}

impl TryFrom<DenseMatrix> for IndicatorMatrix {
    type Error = ClusterError;

    fn try_from(m: DenseMatrix) -> Result<Self, Self::Error> {
        Self::new(m)
    }
}

impl From<IndicatorMatrix> for DenseMatrix {
    fn from(m: IndicatorMatrix) -> Self {
        m.vectors
    }
}

/// A classifier output paired with its ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledProbs {
    pub probs: Vec<f64>,
    pub label: usize,
}

pub(crate) fn check_simplex(v: &[f64]) -> Result<(), String> {
    for (j, &p) in v.iter().enumerate() {
        if !p.is_finite() || !(-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(&p) {
            return Err(format!("entry {j} = {p} outside [0, 1]"));
        }
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

/// Per-class mean of the probability vectors: row `i` averages every sample
/// whose ground truth is `i`.
pub fn compute_indicator_vectors(
    samples: &[LabeledProbs],
    num_classes: usize,
) -> Result<IndicatorMatrix, ClusterError> {
    if num_classes == 0 {
        return Err(ClusterError::InvalidArgument(
            "num_classes must be positive".into(),
        ));
    }
    let mut sums = DenseMatrix::zeros(num_classes, num_classes);
    let mut counts = vec![0usize; num_classes];
    for (idx, s) in samples.iter().enumerate() {
        if s.probs.len() != num_classes {
            return Err(ClusterError::BadProbability {
                index: idx,
                reason: format!("length {} != {num_classes}", s.probs.len()),
            });
        }
        check_simplex(&s.probs)
            .map_err(|reason| ClusterError::BadProbability { index: idx, reason })?;
        if s.label >= num_classes {
            return Err(ClusterError::LabelOutOfRange {
                label: s.label,
                num_classes,
            });
        }
        counts[s.label] += 1;
        for (acc, &p) in sums.row_mut(s.label).iter_mut().zip(&s.probs) {
            *acc += p;
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(ClusterError::MissingClass { class: missing });
    }
    for (i, &c) in counts.iter().enumerate() {
        let inv = 1.0 / c as f64;
        for v in sums.row_mut(i) {
            *v *= inv;
        }
    }
    IndicatorMatrix::new(sums)
}
