use serde::{Deserialize, Serialize};

use super::graph::{laplacian, min_connected_k_points, SimilarityGraph};
use super::{ClusterError, IndicatorMatrix};
use crate::linalg::{generalized_eig, kmeans, DenseMatrix};

/// Rows of the spectral embedding shorter than this are rejected.
pub const ZERO_ROW_TOL: f64 = 1e-12;

/// Class → hyper-class map.
///
/// Serialized as `{"K":…, "K1":…, "membership":[…], "sizes":[…], "seed":…}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAssignment", into = "RawAssignment")]
pub struct ClusterAssignment {
    membership: Vec<usize>,
    sizes: Vec<usize>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct RawAssignment {
    #[serde(rename = "K")]
    num_classes: usize,
    #[serde(rename = "K1")]
    num_clusters: usize,
    membership: Vec<usize>,
    sizes: Vec<usize>,
    seed: u64,
}

impl TryFrom<RawAssignment> for ClusterAssignment {
    type Error = ClusterError;

    fn try_from(raw: RawAssignment) -> Result<Self, Self::Error> {
        if raw.membership.len() != raw.num_classes {
            return Err(ClusterError::InvalidArgument(format!(
                "membership has {} entries, K = {}",
                raw.membership.len(),
                raw.num_classes
            )));
        }
        let a = ClusterAssignment::from_membership(raw.membership, raw.seed)?;
        if a.num_clusters() != raw.num_clusters || a.sizes != raw.sizes {
            return Err(ClusterError::InvalidArgument(
                "K1 or sizes disagree with membership".into(),
            ));
        }
        Ok(a)
    }
}

impl From<ClusterAssignment> for RawAssignment {
    fn from(a: ClusterAssignment) -> Self {
        RawAssignment {
            num_classes: a.membership.len(),
            num_clusters: a.sizes.len(),
            membership: a.membership,
            sizes: a.sizes,
            seed: a.seed,
        }
    }
}

impl ClusterAssignment {
    /// Accepts labels in `[0, K1)` where every cluster has at least one class.
    pub fn from_membership(membership: Vec<usize>, seed: u64) -> Result<Self, ClusterError> {
        if membership.is_empty() {
            return Err(ClusterError::InvalidArgument("membership is empty".into()));
        }
        let k1 = membership.iter().max().unwrap() + 1;
        let mut sizes = vec![0; k1];
        for &m in &membership {
            sizes[m] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(ClusterError::EmptyCluster { cluster: empty });
        }
        Ok(Self {
            membership,
            sizes,
            seed,
        })
    }

    /// Relabels arbitrary labels to `0..K1` in order of first appearance.
    pub fn from_labels(labels: &[usize], seed: u64) -> Result<Self, ClusterError> {
        let mut map = std::collections::HashMap::new();
        let membership = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self::from_membership(membership, seed)
    }

    /// Consecutive blocks of the given sizes: the first `sizes[0]` classes
    /// form cluster 0 and so on.
    pub fn from_sizes(sizes: &[usize], seed: u64) -> Result<Self, ClusterError> {
        let membership = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
            .collect();
        Self::from_membership(membership, seed)
    }

    pub fn num_classes(&self) -> usize {
        self.membership.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn cluster_of(&self, class: usize) -> usize {
        self.membership[class]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Classes of `cluster` in ascending order; a head's local index `i`
    /// maps to `members(cluster)[i]`.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.membership
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == cluster)
            .map(|(c, _)| c)
            .collect()
    }

    /// Position of `class` inside its cluster's member list.
    pub fn local_index(&self, class: usize) -> usize {
        let cluster = self.membership[class];
        self.membership[..class]
            .iter()
            .filter(|&&m| m == cluster)
            .count()
    }
}

/// Number of eigenvalues before the largest consecutive gap among the first
/// `k_max + 1`; the lowest `k` wins ties.
pub fn choose_k_eigengap(eigenvalues: &[f64], k_max: usize) -> Result<usize, ClusterError> {
    if eigenvalues.len() < 2 || k_max == 0 || k_max >= eigenvalues.len() {
        return Err(ClusterError::InvalidArgument(format!(
            "eigengap needs 1 <= k_max < {}, got {k_max}",
            eigenvalues.len()
        )));
    }
    let mut best = (1, f64::NEG_INFINITY);
    for k in 1..=k_max {
        let gap = eigenvalues[k] - eigenvalues[k - 1];
        if gap > best.1 {
            best = (k, gap);
        }
    }
    Ok(best.0)
}

/// Eigenvectors of the `k` smallest generalized eigenvalues of `L x = λ D x`,
/// each row scaled to unit length.
pub fn spectral_embed(
    l: &DenseMatrix,
    d: &DenseMatrix,
    k: usize,
) -> Result<DenseMatrix, ClusterError> {
    let eig = generalized_eig(l, d, EIG_TOL)?;
    embed_rows(&eig.eigenvectors, k)
}

fn embed_rows(eigenvectors: &DenseMatrix, k: usize) -> Result<DenseMatrix, ClusterError> {
    if k == 0 || k > eigenvectors.cols() {
        return Err(ClusterError::InvalidArgument(format!(
            "embedding dimension must be in [1, {}], got {k}",
            eigenvectors.cols()
        )));
    }
    let mut y = eigenvectors.leading_columns(k);
    for i in 0..y.rows() {
        let norm = y.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < ZERO_ROW_TOL {
            return Err(ClusterError::ZeroRow { row: i });
        }
        for v in y.row_mut(i) {
            *v /= norm;
        }
    }
    Ok(y)
}

const EIG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOptions {
    /// Upper bound for the eigengap search; `None` means `min(K - 1, 16)`.
    pub k_max: Option<usize>,
    pub kmeans_max_iter: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            k_max: None,
            kmeans_max_iter: 300,
        }
    }
}

/// Full trace of one spectral clustering run.
#[derive(Debug, Clone)]
pub struct SpectralOutcome {
    pub assignment: ClusterAssignment,
    /// Neighbor count that first connected the KNN graph.
    pub knn_k: usize,
    pub graph: SimilarityGraph,
    pub eigenvalues: Vec<f64>,
    /// Cluster count handed to k-means (eigengap choice or override).
    pub requested_k: usize,
}

/// Cluster membership by spectral clustering of the indicator rows.
pub fn assign_clusters(
    ind: &IndicatorMatrix,
    k_override: Option<usize>,
    seed: u64,
) -> Result<ClusterAssignment, ClusterError> {
    spectral_clustering(ind.vectors(), k_override, seed, &SpectralOptions::default())
        .map(|o| o.assignment)
}

/// Spectral clustering on arbitrary points (one row per item).
pub fn spectral_clustering(
    points: &DenseMatrix,
    k_override: Option<usize>,
    seed: u64,
    opts: &SpectralOptions,
) -> Result<SpectralOutcome, ClusterError> {
    let n = points.rows();
    if n < 2 {
        return Err(ClusterError::InvalidArgument(
            "need at least two classes".into(),
        ));
    }
    let (knn_k, graph) = min_connected_k_points(points)?;
    let (d, l) = laplacian(&graph);
    let eig = generalized_eig(&l, &d, EIG_TOL)?;

    let requested_k = match k_override {
        Some(k) if k == 0 || k > n => {
            return Err(ClusterError::InvalidArgument(format!(
                "k_override must be in [1, {n}], got {k}"
            )))
        }
        Some(k) => k,
        None => {
            let k_max = opts.k_max.unwrap_or(16).min(n - 1);
            choose_k_eigengap(&eig.eigenvalues, k_max)?
        }
    };

    let y = embed_rows(&eig.eigenvectors, requested_k)?;
    let km = kmeans(&y, requested_k, seed, opts.kmeans_max_iter)?;
    let assignment = ClusterAssignment::from_labels(&km.assignments, seed)?;
    Ok(SpectralOutcome {
        assignment,
        knn_k,
        graph,
        eigenvalues: eig.eigenvalues,
        requested_k,
    })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let comb2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_cells: f64 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = table.iter().map(|r| comb2(r.iter().sum())).sum();
    let sum_cols: f64 = (0..kb)
        .map(|j| comb2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = comb2(n as u64);
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if max_index == expected {
        // both labelings trivial (all singletons or one block)
        return 1.0;
    }
    (sum_cells - expected) / (max_index - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigengap_examples() {
        assert_eq!(
            choose_k_eigengap(&[0.0, 0.01, 0.02, 1.5, 1.6], 4).unwrap(),
            3
        );
        for c in 1..5 {
            let mut eig = vec![0.0; c];
            eig.extend([0.8, 0.9, 1.0, 1.1, 1.2]);
            assert_eq!(choose_k_eigengap(&eig, eig.len() - 1).unwrap(), c);
        }
        assert!(choose_k_eigengap(&[0.0], 1).is_err());
        assert!(choose_k_eigengap(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn embed_two_components_is_piecewise_constant() {
        // path 0-1-2 and edge 3-4
        let mut a = DenseMatrix::zeros(5, 5);
        for (i, j) in [(0, 1), (1, 2), (3, 4)] {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        let g = SimilarityGraph::from_adjacency(a).unwrap();
        let (d, l) = laplacian(&g);
        let y = spectral_embed(&l, &d, 2).unwrap();
        for comp in [&[0usize, 1, 2][..], &[3, 4]] {
            for &i in &comp[1..] {
                for c in 0..2 {
                    assert!((y[(i, c)] - y[(comp[0], c)]).abs() < 1e-8);
                }
            }
        }
        let dot: f64 = y.row(0).iter().zip(y.row(3)).map(|(p, q)| p * q).sum();
        assert!(dot.abs() < 1e-8, "component rows should be orthogonal");
    }

    #[test]
    fn embed_k1_connected_is_constant_sign() {
        let mut a = DenseMatrix::zeros(4, 4);
        for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)] {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        let (d, l) = laplacian(&SimilarityGraph::from_adjacency(a).unwrap());
        let y = spectral_embed(&l, &d, 1).unwrap();
        let first = y[(0, 0)];
        assert!((first.abs() - 1.0).abs() < 1e-12);
        for i in 1..4 {
            assert!((y[(i, 0)] - first).abs() < 1e-10);
        }
    }

    #[test]
    fn embed_reports_zero_row() {
        let v = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(
            embed_rows(&v, 1),
            Err(ClusterError::ZeroRow { row: 1 })
        ));
    }

    #[test]
    fn identity_indicator_with_override_gives_singletons() {
        let ind = IndicatorMatrix::new(DenseMatrix::identity(4)).unwrap();
        let a = assign_clusters(&ind, Some(4), 1).unwrap();
        assert_eq!(a.num_clusters(), 4);
        assert_eq!(a.sizes(), &[1, 1, 1, 1]);
    }

    #[test]
    fn two_planted_groups() {
        // two blocks of six near-identical rows
        let k = 12;
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                let group = i / 6;
                let mut r: Vec<f64> = (0..k)
                    .map(|j| if j / 6 == group { 0.9 / 6.0 } else { 0.1 / 6.0 })
                    .collect();
                let wiggle = 0.002 * (i % 6) as f64;
                r[group * 6] += wiggle;
                r[group * 6 + 1] -= wiggle;
                r
            })
            .collect();
        let ind = IndicatorMatrix::new(DenseMatrix::from_rows(&rows).unwrap()).unwrap();
        let a = assign_clusters(&ind, None, 3).unwrap();
        assert_eq!(a.num_clusters(), 2);
        let truth: Vec<usize> = (0..k).map(|i| i / 6).collect();
        assert_eq!(adjusted_rand_index(a.membership(), &truth), 1.0);
    }

    #[test]
    fn assignment_json_shape_and_validation() {
        let a = ClusterAssignment::from_sizes(&[2, 1], 9).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(
            json,
            r#"{"K":3,"K1":2,"membership":[0,0,1],"sizes":[2,1],"seed":9}"#
        );
        assert_eq!(serde_json::from_str::<ClusterAssignment>(&json).unwrap(), a);
        let bad = r#"{"K":3,"K1":3,"membership":[0,0,2],"sizes":[2,0,1],"seed":9}"#;
        assert!(serde_json::from_str::<ClusterAssignment>(bad).is_err());
        assert_eq!(a.members(0), vec![0, 1]);
        assert_eq!(a.local_index(1), 1);
        assert_eq!(a.local_index(2), 0);
    }

    #[test]
    fn ari_basics() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[1, 1, 1]), 1.0);
    }
}
