//! Hyper-class routing: confusion counts of the clustifier, the
//! confidence-sum activation policy and confusion-weighted fusion of the
//! activated hyper-class heads.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{check_simplex, ClusterAssignment};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouterError {
    #[error("index {index} out of range for {bound} clusters")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("invalid confidence vector: {0}")]
    BadConfidence(String),
    #[error("tau must lie in (0, 1), got {0}")]
    InvalidTau(f64),
    #[error("confusion column {cluster} is all zeros")]
    ZeroColumn { cluster: usize },
    #[error("no head output for active cluster {cluster}")]
    MissingHyperOutput { cluster: usize },
    #[error("head output for cluster {cluster} is invalid: {reason}")]
    BadHyperOutput { cluster: usize, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// `counts[i][j]` = samples of true cluster `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawConfusion", into = "RawConfusion")]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct RawConfusion {
    #[serde(rename = "K1")]
    num_clusters: usize,
    counts: Vec<Vec<u64>>,
}

impl TryFrom<RawConfusion> for ConfusionMatrix {
    type Error = RouterError;

    fn try_from(raw: RawConfusion) -> Result<Self, Self::Error> {
        ConfusionMatrix::from_counts(raw.counts).and_then(|cm| {
            if cm.num_clusters() == raw.num_clusters {
                Ok(cm)
            } else {
                Err(RouterError::DimensionMismatch(format!(
                    "K1 = {} but counts is {}x{}",
                    raw.num_clusters,
                    cm.num_clusters(),
                    cm.num_clusters()
                )))
            }
        })
    }
}

impl From<ConfusionMatrix> for RawConfusion {
    fn from(cm: ConfusionMatrix) -> Self {
        RawConfusion {
            num_clusters: cm.counts.len(),
            counts: cm.counts,
        }
    }
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, RouterError> {
        let k1 = counts.len();
        if k1 == 0 {
            return Err(RouterError::DimensionMismatch("no clusters".into()));
        }
        if let Some(row) = counts.iter().find(|r| r.len() != k1) {
            return Err(RouterError::DimensionMismatch(format!(
                "row of length {} in a {k1}-cluster matrix",
                row.len()
            )));
        }
        Ok(Self { counts })
    }

    pub fn num_clusters(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn count(&self, true_cluster: usize, predicted: usize) -> u64 {
        self.counts[true_cluster][predicted]
    }

    /// Entries `(·, predicted)`: how often each true cluster received this prediction.
    pub fn column(&self, predicted: usize) -> Vec<u64> {
        self.counts.iter().map(|r| r[predicted]).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Fraction of samples on the diagonal; zero for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let diag: u64 = (0..self.num_clusters()).map(|i| self.counts[i][i]).sum();
        diag as f64 / total as f64
    }
}

/// Tallies `(predicted, true)` pairs.
pub fn confusion_matrix(
    pred_true_pairs: &[(usize, usize)],
    num_clusters: usize,
) -> Result<ConfusionMatrix, RouterError> {
    if num_clusters == 0 {
        return Err(RouterError::DimensionMismatch("no clusters".into()));
    }
    let mut counts = vec![vec![0u64; num_clusters]; num_clusters];
    for &(pred, truth) in pred_true_pairs {
        for index in [pred, truth] {
            if index >= num_clusters {
                return Err(RouterError::IndexOutOfRange {
                    index,
                    bound: num_clusters,
                });
            }
        }
        counts[truth][pred] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Clustifier softmax output for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClusterConfidence(Vec<f64>);

impl ClusterConfidence {
    pub fn new(v: Vec<f64>) -> Result<Self, RouterError> {
        if v.is_empty() {
            return Err(RouterError::BadConfidence("empty vector".into()));
        }
        check_simplex(&v).map_err(RouterError::BadConfidence)?;
        Ok(Self(v))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl TryFrom<Vec<f64>> for ClusterConfidence {
    type Error = RouterError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ClusterConfidence> for Vec<f64> {
    fn from(c: ClusterConfidence) -> Self {
        c.0
    }
}

/// How the activation set was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationPath {
    /// The predicted cluster alone passed the threshold.
    Confident,
    /// The confusion-column loop stopped at some `l`.
    Confusion,
    /// No `l` passed; every cluster is active.
    Exhausted,
    /// The predicted cluster's column was empty; clusters taken by descending confidence.
    ZeroColumnFallback,
}

/// Active clusters with their fusion weights, in activation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSet {
    pub members: Vec<(usize, f64)>,
    pub tau: f64,
    pub path: ActivationPath,
}

impl ActivationSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn clusters(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.0).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.1).collect()
    }

    pub fn weight_of(&self, cluster: usize) -> Option<f64> {
        self.members.iter().find(|m| m.0 == cluster).map(|m| m.1)
    }

    pub fn contains(&self, cluster: usize) -> bool {
        self.weight_of(cluster).is_some()
    }

    /// Summed confidence of the active clusters.
    pub fn confidence_sum(&self, v: &ClusterConfidence) -> f64 {
        self.members.iter().map(|&(c, _)| v.values()[c]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroColumnPolicy {
    /// Order clusters by descending confidence until the sum passes `tau`.
    Fallback,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationOptions {
    /// Union the predicted cluster into every candidate set of the loop.
    pub force_include_predicted: bool,
    pub zero_column: ZeroColumnPolicy,
}

impl Default for ActivationOptions {
    fn default() -> Self {
        Self {
            force_include_predicted: true,
            zero_column: ZeroColumnPolicy::Fallback,
        }
    }
}

/// [`activate_with`] under default options.
pub fn activate(
    v: &ClusterConfidence,
    cm: &ConfusionMatrix,
    tau: f64,
) -> Result<ActivationSet, RouterError> {
    activate_with(v, cm, tau, &ActivationOptions::default())
}

/// Picks the clusters whose heads run for one input.
///
/// If the top confidence exceeds `tau` only that cluster runs. Otherwise the
/// candidates for `l = 1, 2, …` are the `l` largest entries of the predicted
/// cluster's confusion column, weighted by those entries normalized to one, and
/// the first candidate set whose confidence sum exceeds `tau` is returned.
pub fn activate_with(
    v: &ClusterConfidence,
    cm: &ConfusionMatrix,
    tau: f64,
    opts: &ActivationOptions,
) -> Result<ActivationSet, RouterError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(RouterError::InvalidTau(tau));
    }
    let k1 = cm.num_clusters();
    if v.len() != k1 {
        return Err(RouterError::DimensionMismatch(format!(
            "confidence has {} entries, confusion matrix {k1}",
            v.len()
        )));
    }
    let vals = v.values();
    let index = v.argmax();
    if vals[index] > tau {
        return Ok(ActivationSet {
            members: vec![(index, 1.0)],
            tau,
            path: ActivationPath::Confident,
        });
    }

    let column = cm.column(index);
    if column.iter().all(|&c| c == 0) {
        return match opts.zero_column {
            ZeroColumnPolicy::Error => Err(RouterError::ZeroColumn { cluster: index }),
            ZeroColumnPolicy::Fallback => Ok(confidence_fallback(vals, tau)),
        };
    }

    let order = descending_order(&column, |a, b| a.cmp(b));
    let mut actives: Vec<usize> = Vec::with_capacity(k1);
    if opts.force_include_predicted {
        actives.push(index);
    }
    for &next in &order {
        if !actives.contains(&next) {
            actives.push(next);
        }
        let sum: f64 = actives.iter().map(|&c| vals[c]).sum();
        if sum > tau {
            return Ok(ActivationSet {
                members: weighted(&actives, &column),
                tau,
                path: ActivationPath::Confusion,
            });
        }
    }
    Ok(ActivationSet {
        members: weighted(&order, &column),
        tau,
        path: ActivationPath::Exhausted,
    })
}

fn weighted(actives: &[usize], column: &[u64]) -> Vec<(usize, f64)> {
    let total: u64 = actives.iter().map(|&c| column[c]).sum();
    actives
        .iter()
        .map(|&c| (c, column[c] as f64 / total as f64))
        .collect()
}

fn confidence_fallback(vals: &[f64], tau: f64) -> ActivationSet {
    let order = descending_order(vals, |a, b| a.total_cmp(b));
    let mut taken = Vec::new();
    let mut sum = 0.0;
    for &c in &order {
        taken.push(c);
        sum += vals[c];
        if sum > tau {
            break;
        }
    }
    let mass: f64 = taken.iter().map(|&c| vals[c]).sum();
    let members = taken
        .iter()
        .map(|&c| {
            let w = if mass > 0.0 {
                vals[c] / mass
            } else {
                1.0 / taken.len() as f64
            };
            (c, w)
        })
        .collect();
    ActivationSet {
        members,
        tau,
        path: ActivationPath::ZeroColumnFallback,
    }
}

/// Indices sorted by descending value; equal values keep ascending index order.
fn descending_order<T>(values: &[T], cmp: impl Fn(&T, &T) -> std::cmp::Ordering) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| cmp(&values[b], &values[a]).then(a.cmp(&b)));
    order
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in values.iter().enumerate().skip(1) {
        if x > values[best] {
            best = i;
        }
    }
    best
}

/// Global class scores: a class of active cluster `f` scores
/// `weight(f) · H_f[c]`, classes of inactive clusters score zero.
///
/// `hyper_outputs[f]` is indexed by the position of the class inside
/// `membership.members(f)`. Outputs for inactive clusters are ignored.
pub fn fuse(
    act: &ActivationSet,
    hyper_outputs: &BTreeMap<usize, Vec<f64>>,
    membership: &ClusterAssignment,
) -> Result<Vec<f64>, RouterError> {
    let mut scores = vec![0.0; membership.num_classes()];
    for &(cluster, weight) in &act.members {
        if cluster >= membership.num_clusters() {
            return Err(RouterError::IndexOutOfRange {
                index: cluster,
                bound: membership.num_clusters(),
            });
        }
        let h = hyper_outputs
            .get(&cluster)
            .ok_or(RouterError::MissingHyperOutput { cluster })?;
        let classes = membership.members(cluster);
        if h.len() != classes.len() {
            return Err(RouterError::BadHyperOutput {
                cluster,
                reason: format!("length {} for {} member classes", h.len(), classes.len()),
            });
        }
        check_simplex(h).map_err(|reason| RouterError::BadHyperOutput { cluster, reason })?;
        for (&class, &p) in classes.iter().zip(h) {
            scores[class] = weight * p;
        }
    }
    Ok(scores)
}

/// The `k` highest-scoring classes, best first; ties go to the lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order = descending_order(scores, |a, b| a.total_cmp(b));
    order.truncate(k);
    order
}

pub fn top1(scores: &[f64]) -> usize {
    argmax(scores)
}

/// One line of an activation trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRecord {
    pub sample_id: u64,
    pub tau: f64,
    pub members: Vec<usize>,
    pub weights: Vec<f64>,
}

impl ActivationRecord {
    pub fn new(sample_id: u64, act: &ActivationSet) -> Self {
        Self {
            sample_id,
            tau: act.tau,
            members: act.clusters(),
            weights: act.weights(),
        }
    }
}

/// Writes one JSON object per line.
pub fn write_trace<W: Write>(mut out: W, records: &[ActivationRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
