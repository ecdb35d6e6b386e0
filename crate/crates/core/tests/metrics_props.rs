mod support;

use std::collections::BTreeSet;

use cdcr_core::clusterer::ClusterSet;
use cdcr_core::metrics::{b_cubed, ceaf_e, evaluate, kuhn_munkres, muc, MetricResult};
use proptest::prelude::*;

fn close(got: &MetricResult, want: (f64, f64, f64)) -> bool {
    (got.recall - want.0).abs() < 1e-12
        && (got.precision - want.1).abs() < 1e-12
        && (got.f1 - want.2).abs() < 1e-12
}

#[test]
fn exhaustive_against_oracles_up_to_six_mentions() {
    let mut checked = 0;
    for n in 1..=6 {
        let parts = support::set_partitions(&support::ids(n));
        let sets: Vec<ClusterSet> = parts.iter().map(|p| support::to_cluster_set(p)).collect();
        for (kp, k) in parts.iter().zip(&sets) {
            for (rp, r) in parts.iter().zip(&sets) {
                assert!(close(&muc(k, r).unwrap(), support::muc(kp, rp)), "muc {kp:?} {rp:?}");
                assert!(close(&b_cubed(k, r).unwrap(), support::b_cubed(kp, rp)), "b3 {kp:?} {rp:?}");
                assert!(close(&ceaf_e(k, r).unwrap(), support::ceaf_e(kp, rp)), "ceafe {kp:?} {rp:?}");
                checked += 1;
            }
        }
    }
    // Σ Bell(n)² for n = 1..6
    assert_eq!(checked, 1 + 4 + 25 + 225 + 2704 + 41209);
}

#[test]
fn worked_instance() {
    let ids = support::ids(3);
    let key = support::to_cluster_set(std::slice::from_ref(&ids));
    let resp = support::to_cluster_set(&[ids[..2].to_vec(), ids[2..].to_vec()]);
    let e = evaluate(&key, &resp).unwrap();
    assert!((e.muc.f1 - 2.0 / 3.0).abs() < 1e-6);
    assert!((e.b3.f1 - 5.0 / 7.0).abs() < 1e-6);
    assert!((e.ceaf_e.f1 - 8.0 / 15.0).abs() < 1e-6);
    assert!((e.conll_f1 - (2.0 / 3.0 + 5.0 / 7.0 + 8.0 / 15.0) / 3.0).abs() < 1e-6);
}

fn partition_strategy(max: usize) -> impl Strategy<Value = Vec<usize>> {
    (1..=max).prop_flat_map(|n| prop::collection::vec(0..n, n))
}

fn from_labels(labels: &[usize], prefix: &str) -> ClusterSet {
    ClusterSet::from_assignments(
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("m{i}"), format!("{prefix}{l}")))
            .collect::<Vec<_>>()
            .iter()
            .map(|(m, c)| (m.as_str(), c.as_str())),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn kuhn_munkres_matches_brute_force(
        rows in 1usize..=6,
        cols in 1usize..=6,
        seed in prop::collection::vec(0.0f64..1.0, 36),
    ) {
        let sim: Vec<Vec<f64>> = (0..rows)
            .map(|i| (0..cols).map(|j| seed[i * 6 + j]).collect())
            .collect();
        let a = kuhn_munkres(&sim).unwrap();
        prop_assert!((a.total_similarity - support::best_assignment(&sim)).abs() < 1e-9);
        prop_assert_eq!(a.matching.len(), rows.min(cols));
        let rs: BTreeSet<_> = a.matching.iter().map(|p| p.0).collect();
        let cs: BTreeSet<_> = a.matching.iter().map(|p| p.1).collect();
        prop_assert_eq!(rs.len(), a.matching.len());
        prop_assert_eq!(cs.len(), a.matching.len());
        let sum: f64 = a.matching.iter().map(|&(i, j)| sim[i][j]).sum();
        prop_assert!((sum - a.total_similarity).abs() < 1e-9);
    }

    #[test]
    fn invariant_under_cluster_relabeling(key in partition_strategy(12), resp_seed in prop::collection::vec(0usize..12, 12)) {
        let n = key.len();
        let resp: Vec<usize> = resp_seed[..n].iter().map(|v| v % n).collect();
        let k1 = from_labels(&key, "a");
        let k2 = from_labels(&key.iter().map(|l| 100 - l).collect::<Vec<_>>(), "z");
        let r1 = from_labels(&resp, "b");
        let r2 = from_labels(&resp.iter().map(|l| l * 7 + 3).collect::<Vec<_>>(), "q");
        prop_assert_eq!(evaluate(&k1, &r1).unwrap(), evaluate(&k2, &r2).unwrap());
    }

    #[test]
    fn perfect_response_scores_one(key in partition_strategy(15)) {
        let k = from_labels(&key, "a");
        let e = evaluate(&k, &k).unwrap();
        prop_assert_eq!(e.b3.f1, 1.0);
        prop_assert_eq!(e.ceaf_e.f1, 1.0);
        // MUC has no links to count when every cluster is a singleton.
        let all_singletons = k.clusters().iter().all(|c| c.len() == 1);
        prop_assert_eq!(e.muc.f1, if all_singletons { 0.0 } else { 1.0 });
    }

    #[test]
    fn scores_stay_in_unit_interval(key in partition_strategy(10), resp_seed in prop::collection::vec(0usize..10, 10)) {
        let n = key.len();
        let resp: Vec<usize> = resp_seed[..n].iter().map(|v| v % n).collect();
        let e = evaluate(&from_labels(&key, "a"), &from_labels(&resp, "b")).unwrap();
        for m in [e.muc, e.b3, e.ceaf_e] {
            for v in [m.recall, m.precision, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
