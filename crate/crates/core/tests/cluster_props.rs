use std::collections::{BTreeMap, BTreeSet};

use cdcr_core::clusterer::{cluster, ClusterSet};
use cdcr_core::scorer::PairScore;
use proptest::prelude::*;

fn scored_graph() -> impl Strategy<Value = (usize, Vec<PairScore>)> {
    (1usize..=30).prop_flat_map(|n| {
        let edges = prop::collection::vec((0..n, 0..n, 0.0f64..1.0, 0.0f64..1.0), 0..60);
        edges.prop_map(move |es| {
            let scores = es
                .into_iter()
                .filter(|(a, b, _, _)| a != b)
                .map(|(a, b, x, y)| PairScore::new(format!("m{a:02}"), format!("m{b:02}"), x, y))
                .collect();
            (n, scores)
        })
    })
}

fn mentions(n: usize) -> BTreeSet<String> {
    (0..n).map(|i| format!("m{i:02}")).collect()
}

/// Reference closure by repeated relaxation of component labels.
fn reference(n: usize, scores: &[PairScore], threshold: f64) -> BTreeSet<BTreeSet<String>> {
    let mut label: BTreeMap<String, usize> = mentions(n).into_iter().enumerate().map(|(i, m)| (m, i)).collect();
    loop {
        let mut changed = false;
        for s in scores.iter().filter(|s| s.s_mean >= threshold) {
            let (la, lb) = (label[&s.a], label[&s.b]);
            if la != lb {
                let (lo, hi) = (la.min(lb), la.max(lb));
                label.values_mut().filter(|v| **v == hi).for_each(|v| *v = lo);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (m, l) in label {
        groups.entry(l).or_default().insert(m);
    }
    groups.into_values().collect()
}

fn as_sets(c: &ClusterSet) -> BTreeSet<BTreeSet<String>> {
    c.clusters().iter().cloned().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn closure_is_valid_partition_and_matches_reference((n, scores) in scored_graph(), t in 0.0f64..=1.0) {
        let c = cluster(&mentions(n), &scores, t).unwrap();
        prop_assert_eq!(c.mention_count(), n);
        let covered: BTreeSet<String> = c.covers().into_iter().map(String::from).collect();
        prop_assert_eq!(covered, mentions(n));
        prop_assert_eq!(as_sets(&c), reference(n, &scores, t));
    }

    #[test]
    fn raising_threshold_refines((n, scores) in scored_graph(), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let coarse = cluster(&mentions(n), &scores, lo).unwrap();
        let fine = cluster(&mentions(n), &scores, hi).unwrap();
        let owner = coarse.membership();
        for c in fine.clusters() {
            let owners: BTreeSet<usize> = c.iter().map(|m| owner[m.as_str()]).collect();
            prop_assert_eq!(owners.len(), 1);
        }
        prop_assert!(fine.len() >= coarse.len());
    }

    #[test]
    fn score_order_does_not_matter((n, scores) in scored_graph(), t in 0.0f64..=1.0, rot in 0usize..60) {
        let mut shuffled = scores.clone();
        shuffled.reverse();
        if !shuffled.is_empty() {
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
        }
        let a = cluster(&mentions(n), &scores, t).unwrap();
        let b = cluster(&mentions(n), &shuffled, t).unwrap();
        prop_assert_eq!(as_sets(&a), as_sets(&b));
    }
}

#[test]
fn transitive_closure_chains_links() {
    let ms: BTreeSet<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let scores = [
        PairScore::new("a", "b", 0.9, 0.9),
        PairScore::new("b", "c", 0.6, 0.6),
        PairScore::new("c", "d", 0.4, 0.4),
    ];
    let c = cluster(&ms, &scores, 0.5).unwrap();
    let want: BTreeSet<BTreeSet<String>> = [vec!["a", "b", "c"], vec!["d"]]
        .iter()
        .map(|v| v.iter().map(|s| s.to_string()).collect())
        .collect();
    assert_eq!(as_sets(&c), want);
}
