use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::squared_distance;
use super::{DenseMatrix, LinalgError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: DenseMatrix,
    /// Sum of squared distances from each point to its centroid.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
}

impl KMeansResult {
    /// Number of clusters that received at least one point.
    pub fn distinct_clusters(&self) -> usize {
        let mut seen = vec![false; self.centroids.rows()];
        for &a in &self.assignments {
            seen[a] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }
}

/// Lloyd's k-means with greedy farthest-point seeding.
///
/// The first center is the point picked by `seed`; every following center is the
/// point with the largest distance to the centers chosen so far.
pub fn kmeans(
    points: &DenseMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KMeansResult, LinalgError> {
    let n = points.rows();
    if k > n {
        return Err(LinalgError::KTooLarge { k, n });
    }
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..n);
    kmeans_from_start(points, k, start, max_iter)
}

/// Same as [`kmeans`] with an explicit first center.
pub fn kmeans_from_start(
    points: &DenseMatrix,
    k: usize,
    start: usize,
    max_iter: usize,
) -> Result<KMeansResult, LinalgError> {
    let n = points.rows();
    if k == 0 {
        return Err(LinalgError::InvalidArgument("k must be at least 1".into()));
    }
    if k > n {
        return Err(LinalgError::KTooLarge { k, n });
    }
    if max_iter == 0 {
        return Err(LinalgError::InvalidArgument(
            "max_iter must be at least 1".into(),
        ));
    }
    if start >= n {
        return Err(LinalgError::InvalidArgument(format!(
            "start index {start} out of range for {n} points"
        )));
    }

    let mut centroids = farthest_point_seeds(points, k, start);
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    let mut inertia_trace = Vec::new();
    while iterations < max_iter {
        iterations += 1;
        let changed = assign(points, &centroids, &mut assignments);
        inertia_trace.push(inertia(points, &centroids, &assignments));
        if !changed {
            break;
        }
        update_centroids(points, &mut centroids, &mut assignments);
    }

    // exiting on max_iter leaves centroids one update ahead of the assignment
    assign(points, &centroids, &mut assignments);
    let inertia = inertia(points, &centroids, &assignments);
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia,
        iterations,
        inertia_trace,
    })
}

fn inertia(points: &DenseMatrix, centroids: &DenseMatrix, assignments: &[usize]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| squared_distance(points.row(i), centroids.row(a)))
        .sum()
}

fn farthest_point_seeds(points: &DenseMatrix, k: usize, start: usize) -> DenseMatrix {
    let n = points.rows();
    let mut centroids = DenseMatrix::zeros(k, points.cols());
    centroids.row_mut(0).copy_from_slice(points.row(start));
    let mut min_dist: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(start)))
        .collect();
    for c in 1..k {
        // strict comparison keeps the lowest index on ties
        let mut best = 0;
        for i in 1..n {
            if min_dist[i] > min_dist[best] {
                best = i;
            }
        }
        centroids.row_mut(c).copy_from_slice(points.row(best));
        for (i, md) in min_dist.iter_mut().enumerate() {
            let d = squared_distance(points.row(i), points.row(best));
            if d < *md {
                *md = d;
            }
        }
    }
    centroids
}

/// Nearest centroid per point, lowest index on ties. Returns whether anything moved.
fn assign(points: &DenseMatrix, centroids: &DenseMatrix, assignments: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, slot) in assignments.iter_mut().enumerate() {
        let best = nearest(points.row(i), centroids).0;
        if *slot != best {
            *slot = best;
            changed = true;
        }
    }
    changed
}

fn nearest(p: &[f64], centroids: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, squared_distance(p, centroids.row(0)));
    for c in 1..centroids.rows() {
        let d = squared_distance(p, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn update_centroids(points: &DenseMatrix, centroids: &mut DenseMatrix, assignments: &mut [usize]) {
    let k = centroids.rows();
    let dim = points.cols();
    let mut sums = DenseMatrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, &x) in sums.row_mut(a).iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let inv = 1.0 / count as f64;
            for (dst, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
        }
    }
    // empty cluster: move it onto the point farthest from its own centroid
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far = None::<(usize, f64)>;
        for (i, &a) in assignments.iter().enumerate() {
            if counts[a] <= 1 {
                continue;
            }
            let d = squared_distance(points.row(i), centroids.row(a));
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        if let Some((i, d)) = far {
            if d > 0.0 {
                counts[assignments[i]] -= 1;
                assignments[i] = c;
                counts[c] = 1;
                let row = points.row(i).to_vec();
                centroids.row_mut(c).copy_from_slice(&row);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn brute_force_two_partition(points: &DenseMatrix) -> f64 {
        let n = points.rows();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << (n - 1)) {
            let mut total = 0.0;
            for side in [0, 1] {
                let members: Vec<usize> = (0..n)
                    .filter(|&i| ((mask >> i) & 1) as usize == side)
                    .collect();
                let mut mean = vec![0.0; points.cols()];
                for &i in &members {
                    for (m, x) in mean.iter_mut().zip(points.row(i)) {
                        *m += x / members.len() as f64;
                    }
                }
                total += members
                    .iter()
                    .map(|&i| squared_distance(points.row(i), &mean))
                    .sum::<f64>();
            }
            best = best.min(total);
        }
        best
    }

    #[test]
    fn separated_pair_is_two_singletons() {
        let p = DenseMatrix::from_rows(&[[0.0], [10.0]]).unwrap();
        let r = kmeans(&p, 2, 0, 10).unwrap();
        assert_ne!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn identical_points_have_zero_inertia() {
        let p = DenseMatrix::from_rows(&[[1.0, 2.0]; 5]).unwrap();
        let r = kmeans(&p, 2, 3, 10).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert_eq!(r.distinct_clusters(), 1);
    }

    #[test]
    fn k_too_large() {
        let p = DenseMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(
            kmeans(&p, 3, 0, 10),
            Err(LinalgError::KTooLarge { k: 3, n: 2 })
        ));
    }

    #[test]
    fn eight_points_near_brute_force_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..300u64 {
            let rows: Vec<[f64; 2]> = (0..8)
                .map(|i| {
                    let shift = if i < 4 { 8.0 } else { 0.0 };
                    [
                        shift + rng.random_range(-1.5..1.5),
                        rng.random_range(-1.5..1.5),
                    ]
                })
                .collect();
            let p = DenseMatrix::from_rows(&rows).unwrap();
            let r = kmeans(&p, 2, trial, 100).unwrap();
            let opt = brute_force_two_partition(&p);
            assert!(
                r.inertia <= 1.05 * opt,
                "trial {trial}: {} vs {opt}",
                r.inertia
            );
        }
    }

    #[test]
    fn result_is_a_lloyd_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<[f64; 3]> = (0..40)
            .map(|_| [normal(&mut rng), normal(&mut rng), normal(&mut rng)])
            .collect();
        let p = DenseMatrix::from_rows(&rows).unwrap();
        let r = kmeans(&p, 4, 9, 500).unwrap();
        for i in 0..p.rows() {
            assert_eq!(nearest(p.row(i), &r.centroids).0, r.assignments[i]);
        }
    }

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }
}
