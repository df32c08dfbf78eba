use std::collections::BTreeMap;

use condcls_core::clustering::ClusterAssignment;
use condcls_core::router::{
    activate, activate_with, fuse, top1, ActivationOptions, ActivationPath, ActivationSet,
    ClusterConfidence, ConfusionMatrix,
};
use proptest::prelude::*;

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001..1.0f64, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn counts(n: usize) -> impl Strategy<Value = ConfusionMatrix> {
    prop::collection::vec(prop::collection::vec(0u64..20, n), n)
        .prop_map(|c| ConfusionMatrix::from_counts(c).unwrap())
}

fn routing_case() -> impl Strategy<Value = (ClusterConfidence, ConfusionMatrix)> {
    (2usize..8).prop_flat_map(|k1| {
        (
            simplex(k1).prop_map(|v| ClusterConfidence::new(v).unwrap()),
            counts(k1),
        )
    })
}

fn check_set(act: &ActivationSet, v: &ClusterConfidence, k1: usize) -> Result<(), TestCaseError> {
    prop_assert!(!act.is_empty() && act.len() <= k1);
    let mut seen = act.clusters();
    seen.sort_unstable();
    seen.dedup();
    prop_assert_eq!(seen.len(), act.len());
    prop_assert!(act.weights().iter().all(|&w| (0.0..=1.0).contains(&w)));
    prop_assert!((act.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    prop_assert!(act.confidence_sum(v) > act.tau || act.len() == k1);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn activation_sets_are_well_formed((v, cm) in routing_case(), tau in 0.01..0.99f64) {
        let act = activate(&v, &cm, tau).unwrap();
        check_set(&act, &v, cm.num_clusters())?;
        prop_assert!(act.contains(v.argmax()));
    }

    #[test]
    fn more_tau_never_activates_fewer((v, cm) in routing_case(), a in 0.01..0.99f64, b in 0.01..0.99f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for force in [true, false] {
            let opts = ActivationOptions { force_include_predicted: force, ..Default::default() };
            let small = activate_with(&v, &cm, lo, &opts).unwrap();
            let large = activate_with(&v, &cm, hi, &opts).unwrap();
            prop_assert!(small.len() <= large.len(), "{:?} vs {:?}", small, large);
        }
    }

    #[test]
    fn confident_prediction_runs_alone((v, cm) in routing_case(), frac in 0.0..1.0f64) {
        let top = v.values()[v.argmax()];
        let tau = (top * frac).max(1e-6);
        prop_assume!(tau < top);
        let act = activate(&v, &cm, tau).unwrap();
        prop_assert_eq!(act.path, ActivationPath::Confident);
        prop_assert_eq!(act.members.clone(), vec![(v.argmax(), 1.0)]);
    }

    #[test]
    fn dominant_diagonal_keeps_the_prediction(
        (v, cm) in routing_case(),
        tau in 0.01..0.99f64,
    ) {
        let k1 = cm.num_clusters();
        // lift every diagonal entry above its column
        let mut c = cm.counts().to_vec();
        let col_max: Vec<u64> = (0..k1)
            .map(|j| (0..k1).filter(|&i| i != j).map(|i| c[i][j]).max().unwrap())
            .collect();
        for (j, row) in c.iter_mut().enumerate() {
            row[j] = row[j].max(col_max[j] + 1);
        }
        let cm = ConfusionMatrix::from_counts(c).unwrap();
        let opts = ActivationOptions { force_include_predicted: false, ..Default::default() };
        let act = activate_with(&v, &cm, tau, &opts).unwrap();
        check_set(&act, &v, k1)?;
        prop_assert!(act.contains(v.argmax()));
    }

    #[test]
    fn fusion_argmax_is_scale_free(
        (v, cm) in routing_case(),
        tau in 0.01..0.99f64,
        extra in prop::collection::vec(0usize..8, 0..12),
        exp in -20i32..20,
        head_seed in prop::collection::vec(0.001..1.0f64, 64),
    ) {
        let k1 = cm.num_clusters();
        // every cluster gets one class, the extra classes go where `extra` says
        let membership: Vec<usize> = (0..k1).chain(extra.iter().map(|e| e % k1)).collect();
        let clusters = ClusterAssignment::from_membership(membership, 0).unwrap();
        let mut it = head_seed.iter().cycle();
        let heads: BTreeMap<usize, Vec<f64>> = (0..k1)
            .map(|f| {
                let raw: Vec<f64> = (0..clusters.sizes()[f]).map(|_| *it.next().unwrap()).collect();
                let s: f64 = raw.iter().sum();
                (f, raw.into_iter().map(|x| x / s).collect())
            })
            .collect();
        let act = activate(&v, &cm, tau).unwrap();
        let base = fuse(&act, &heads, &clusters).unwrap();
        let c = 2f64.powi(exp);
        let scaled = ActivationSet {
            members: act.members.iter().map(|&(f, w)| (f, w * c)).collect(),
            ..act.clone()
        };
        let fused = fuse(&scaled, &heads, &clusters).unwrap();
        prop_assert_eq!(top1(&base), top1(&fused));
    }
}
