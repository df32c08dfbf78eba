use condcls_core::clustering::{laplacian, SimilarityGraph};
use condcls_core::linalg::{generalized_eig, kmeans_from_start, symmetric_eig, DenseMatrix};
use proptest::prelude::*;

fn symmetric(n: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-10.0..10.0f64, n * n).prop_map(move |v| {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                m[(i, j)] = v[i * n + j];
                m[(j, i)] = v[i * n + j];
            }
        }
        m
    })
}

fn sized_symmetric() -> impl Strategy<Value = DenseMatrix> {
    (1usize..12).prop_flat_map(symmetric)
}

/// Component sizes and a random spanning tree plus extra edges per component,
/// with vertices shuffled. The first component has an edge so that not every
/// degree is zero.
fn component_graph() -> impl Strategy<Value = (DenseMatrix, usize)> {
    (2usize..8, prop::collection::vec(1usize..8, 0..6))
        .prop_flat_map(|(first, rest)| {
            let sizes: Vec<usize> = std::iter::once(first).chain(rest).collect();
            let n: usize = sizes.iter().sum();
            (
                Just(sizes),
                prop::collection::vec(any::<u32>(), n * 2),
                Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            )
        })
        .prop_map(|(sizes, picks, perm)| {
            let n: usize = sizes.iter().sum();
            let mut a = DenseMatrix::zeros(n, n);
            let mut link = |i: usize, j: usize| {
                let (pi, pj) = (perm[i], perm[j]);
                if pi != pj {
                    a[(pi, pj)] = 1.0;
                    a[(pj, pi)] = 1.0;
                }
            };
            let mut start = 0;
            let mut p = 0;
            for &s in &sizes {
                for v in 1..s {
                    link(start + v, start + picks[p] as usize % v);
                    p += 1;
                    link(start + picks[p] as usize % s, start + v);
                    p += 1;
                }
                start += s;
            }
            (a, sizes.len())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_equals_eigenvalue_sum(m in sized_symmetric()) {
        let eig = symmetric_eig(&m, 1e-12).unwrap();
        let sum: f64 = eig.eigenvalues.iter().sum();
        let scale = m.norm_frobenius().max(1.0);
        prop_assert!((m.trace() - sum).abs() <= 1e-8 * scale);
    }

    #[test]
    fn eigenvectors_are_orthonormal(m in sized_symmetric()) {
        let eig = symmetric_eig(&m, 1e-12).unwrap();
        let n = eig.len();
        for a in 0..n {
            for b in a..n {
                let dot: f64 = eig.vector(a).iter().zip(eig.vector(b)).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-8, "<v{a}, v{b}> = {dot}");
            }
        }
    }

    #[test]
    fn eigenpairs_satisfy_the_equation(m in sized_symmetric()) {
        let eig = symmetric_eig(&m, 1e-12).unwrap();
        let scale = m.norm_inf().max(1.0);
        for i in 0..eig.len() {
            let v = eig.vector(i);
            let mv = m.mul_vec(&v);
            for (x, y) in mv.iter().zip(&v) {
                prop_assert!((x - eig.eigenvalues[i] * y).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn zero_multiplicity_counts_components((adj, c) in component_graph()) {
        let g = SimilarityGraph::from_adjacency(adj).unwrap();
        prop_assert_eq!(g.component_count(), c);
        let (d, l) = laplacian(&g);
        let eig = generalized_eig(&l, &d, 1e-12).unwrap();
        prop_assert_eq!(eig.count_near_zero(1e-8), c);
    }

    #[test]
    fn lloyd_inertia_never_increases(
        pts in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 4..40),
        k in 1usize..5,
        start in any::<prop::sample::Index>(),
    ) {
        prop_assume!(k <= pts.len());
        let m = DenseMatrix::from_rows(&pts).unwrap();
        let r = kmeans_from_start(&m, k, start.index(pts.len()), 100).unwrap();
        for w in r.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].max(1.0));
        }
    }

    #[test]
    fn kmeans_ignores_point_order(
        pts in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 2), 4..30),
        k in 1usize..5,
        start in any::<prop::sample::Index>(),
        perm_seed in any::<u64>(),
    ) {
        prop_assume!(k <= pts.len());
        let n = pts.len();
        let mut perm: Vec<usize> = (0..n).collect();
        // deterministic shuffle from the seed
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let start = start.index(n);
        let a = kmeans_from_start(&DenseMatrix::from_rows(&pts).unwrap(), k, start, 200).unwrap();
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&p| pts[p].clone()).collect();
        let new_start = perm.iter().position(|&p| p == start).unwrap();
        let b = kmeans_from_start(&DenseMatrix::from_rows(&shuffled).unwrap(), k, new_start, 200)
            .unwrap();
        prop_assert!((a.inertia - b.inertia).abs() <= 1e-9 * a.inertia.max(1.0));
        // same partition up to label names
        for i in 0..n {
            for j in 0..n {
                let same_a = a.assignments[perm[i]] == a.assignments[perm[j]];
                prop_assert_eq!(same_a, b.assignments[i] == b.assignments[j]);
            }
        }
    }
}
