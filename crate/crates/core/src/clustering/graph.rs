use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{ClusterError, IndicatorMatrix};
use crate::linalg::{squared_distance, DenseMatrix};

/// Unweighted, symmetric KNN adjacency with an empty diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraph {
    adjacency: DenseMatrix,
}

impl SimilarityGraph {
    /// Validates symmetry, a zero diagonal and `{0, 1}` entries.
    pub fn from_adjacency(adjacency: DenseMatrix) -> Result<Self, ClusterError> {
        if !adjacency.is_square() {
            return Err(ClusterError::InvalidArgument(
                "adjacency must be square".into(),
            ));
        }
        let n = adjacency.rows();
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(ClusterError::InvalidArgument(format!("self loop at {i}")));
            }
            for j in 0..n {
                let a = adjacency[(i, j)];
                if a != 0.0 && a != 1.0 {
                    return Err(ClusterError::InvalidArgument(format!(
                        "adjacency entry ({i}, {j}) = {a} is not 0 or 1"
                    )));
                }
                if a != adjacency[(j, i)] {
                    return Err(ClusterError::InvalidArgument(
                        "adjacency is not symmetric".into(),
                    ));
                }
            }
        }
        Ok(Self { adjacency })
    }

    pub fn len(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn adjacency(&self) -> &DenseMatrix {
        &self.adjacency
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[(i, j)] != 0.0
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.adjacency.row(i).iter().sum())
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        let n = self.len();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.has_edge(i, j))
            .count()
    }

    /// Connected-component label per vertex, numbered by lowest member (BFS).
    pub fn components(&self) -> Vec<usize> {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for root in 0..n {
            if label[root] != usize::MAX {
                continue;
            }
            label[root] = next;
            queue.push_back(root);
            while let Some(u) = queue.pop_front() {
                for (v, lv) in label.iter_mut().enumerate() {
                    if *lv == usize::MAX && self.has_edge(u, v) {
                        *lv = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.components().into_iter().max().map_or(0, |m| m + 1)
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }
}

/// Each row's other rows ordered by (Euclidean distance, index).
struct NeighborTable {
    order: Vec<Vec<usize>>,
}

impl NeighborTable {
    fn new(points: &DenseMatrix) -> Self {
        let n = points.rows();
        let order = (0..n)
            .map(|i| {
                let mut others: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (squared_distance(points.row(i), points.row(j)), j))
                    .collect();
                others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                others.into_iter().map(|(_, j)| j).collect()
            })
            .collect();
        Self { order }
    }

    fn graph(&self, k: usize) -> SimilarityGraph {
        let n = self.order.len();
        let mut adjacency = DenseMatrix::zeros(n, n);
        for (i, neighbors) in self.order.iter().enumerate() {
            for &j in neighbors.iter().take(k) {
                adjacency[(i, j)] = 1.0;
                adjacency[(j, i)] = 1.0;
            }
        }
        SimilarityGraph { adjacency }
    }
}

/// Union-symmetrized KNN graph over the rows of `points`: `i ~ j` iff `j` is
/// among the `k` nearest rows of `i` or vice versa. Distance ties go to the
/// lower index.
pub fn knn_graph(points: &DenseMatrix, k: usize) -> Result<SimilarityGraph, ClusterError> {
    let n = points.rows();
    if k == 0 || k >= n {
        return Err(ClusterError::InvalidArgument(format!(
            "knn k must be in [1, {}], got {k}",
            n.saturating_sub(1)
        )));
    }
    Ok(NeighborTable::new(points).graph(k))
}

pub fn knn_similarity(ind: &IndicatorMatrix, k: usize) -> Result<SimilarityGraph, ClusterError> {
    knn_graph(ind.vectors(), k)
}

/// Smallest `k` whose KNN graph is connected.
pub fn min_connected_k(ind: &IndicatorMatrix) -> Result<usize, ClusterError> {
    min_connected_k_points(ind.vectors()).map(|(k, _)| k)
}

pub(crate) fn min_connected_k_points(
    points: &DenseMatrix,
) -> Result<(usize, SimilarityGraph), ClusterError> {
    let n = points.rows();
    if n < 2 {
        return Err(ClusterError::InvalidArgument(
            "need at least two classes".into(),
        ));
    }
    let table = NeighborTable::new(points);
    for k in 1..n {
        let g = table.graph(k);
        if g.is_connected() {
            return Ok((k, g));
        }
    }
    unreachable!("k = n - 1 yields the complete graph")
}

/// Degree matrix `D` and unnormalized Laplacian `L = D - A`.
pub fn laplacian(g: &SimilarityGraph) -> (DenseMatrix, DenseMatrix) {
    let degrees = g.degrees();
    let d = DenseMatrix::from_diagonal(&degrees);
    let n = g.len();
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            l[(i, j)] = if i == j {
                degrees[i]
            } else {
                -g.adjacency()[(i, j)]
            };
        }
    }
    (d, l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    /// Independent BFS over an adjacency list; returns component count.
    fn bfs_components(adj: &[Vec<usize>]) -> usize {
        let mut seen = vec![false; adj.len()];
        let mut count = 0;
        for s in 0..adj.len() {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    /// Brute-force union KNN from pairwise distances.
    fn oracle_knn(points: &DenseMatrix, k: usize) -> Vec<Vec<usize>> {
        let n = points.rows();
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let s: f64 = points
                        .row(i)
                        .iter()
                        .zip(points.row(j))
                        .map(|(a, b)| (a - b).powi(2))
                        .sum();
                    (s.sqrt(), j)
                })
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for &(_, j) in d.iter().take(k) {
                if !adj[i].contains(&j) {
                    adj[i].push(j);
                }
                if !adj[j].contains(&i) {
                    adj[j].push(i);
                }
            }
        }
        adj
    }

    #[test]
    fn two_points_single_edge() {
        let g = knn_graph(&pts(&[&[0.0, 1.0], &[1.0, 0.0]]), 1).unwrap();
        assert_eq!(g.adjacency().data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn collinear_equidistant_path() {
        let p = pts(&[&[1.0, 0.0], &[0.5, 0.5], &[0.0, 1.0]]);
        let g = knn_graph(&p, 1).unwrap();
        let oracle = oracle_knn(&p, 1);
        for (i, nbrs) in oracle.iter().enumerate() {
            for j in 0..3 {
                assert_eq!(g.has_edge(i, j), nbrs.contains(&j));
            }
        }
        assert!(g.is_connected());
        assert!(g.has_edge(0, 1) && g.has_edge(1, 2));
    }

    #[test]
    fn duplicate_rows_break_ties_to_lowest_index() {
        let p = pts(&[&[0.5, 0.5][..]; 4]);
        let g = knn_graph(&p, 1).unwrap();
        // 0 -> 1, everybody else -> 0
        assert!(g.has_edge(0, 1) && g.has_edge(0, 2) && g.has_edge(0, 3));
        assert!(!g.has_edge(1, 2) && !g.has_edge(2, 3));
        assert!(g.adjacency().is_symmetric(0.0));
    }

    #[test]
    fn min_k_two_separated_pairs() {
        let p = pts(&[
            &[0.9, 0.1, 0.0, 0.0],
            &[0.89, 0.11, 0.0, 0.0],
            &[0.0, 0.0, 0.1, 0.9],
            &[0.0, 0.0, 0.11, 0.89],
        ]);
        let ind = IndicatorMatrix::new(p.clone()).unwrap();
        let oracle_k = (1..4)
            .find(|&k| bfs_components(&oracle_knn(&p, k)) == 1)
            .unwrap();
        assert_eq!(oracle_k, 2);
        assert_eq!(min_connected_k(&ind).unwrap(), oracle_k);
    }

    #[test]
    fn min_k_identical_rows_and_chain() {
        let same = IndicatorMatrix::new(pts(&[&[0.25; 4][..]; 4])).unwrap();
        assert_eq!(min_connected_k(&same).unwrap(), 1);
        let chain = IndicatorMatrix::new(pts(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.75, 0.25, 0.0, 0.0],
            &[0.5, 0.5, 0.0, 0.0],
            &[0.25, 0.75, 0.0, 0.0],
        ]))
        .unwrap();
        assert_eq!(min_connected_k(&chain).unwrap(), 1);
    }

    #[test]
    fn knn_rejects_bad_k() {
        let p = pts(&[&[0.0], &[1.0]]);
        assert!(knn_graph(&p, 0).is_err());
        assert!(knn_graph(&p, 2).is_err());
    }

    #[test]
    fn laplacian_closed_forms() {
        let g = knn_graph(&pts(&[&[0.0], &[1.0]]), 1).unwrap();
        let (d, l) = laplacian(&g);
        assert_eq!(d.data(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(l.data(), &[1.0, -1.0, -1.0, 1.0]);

        let k3 = knn_graph(&pts(&[&[0.0], &[1.0], &[2.0]]), 2).unwrap();
        let (_, l) = laplacian(&k3);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 2.0 } else { -1.0 };
                assert_eq!(l[(i, j)], want);
            }
        }
        // ones are in the null space
        assert!(l.mul_vec(&[1.0; 3]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn from_adjacency_validation() {
        let bad = DenseMatrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert!(SimilarityGraph::from_adjacency(bad).is_err());
        let loops = DenseMatrix::identity(2);
        assert!(SimilarityGraph::from_adjacency(loops).is_err());
        let ok = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(SimilarityGraph::from_adjacency(ok).unwrap().edge_count(), 1);
    }
}
