use std::collections::{BTreeSet, VecDeque};

use cdcr_core::taxonomy::{read_taxonomy, write_taxonomy, Taxonomy};
use proptest::prelude::*;

/// Random DAG: node i may only take parents among 0..i, so no cycles.
fn dag() -> impl Strategy<Value = Vec<(Vec<usize>, usize)>> {
    (1usize..=40).prop_flat_map(|n| {
        (0..n)
            .map(|i| {
                let parents = if i == 0 {
                    Just(vec![]).boxed()
                } else {
                    prop::collection::vec(0..i, 0..=2).boxed()
                };
                (parents, 0usize..6)
            })
            .collect::<Vec<_>>()
    })
}

fn build(shape: &[(Vec<usize>, usize)]) -> Taxonomy {
    let names: Vec<String> = (0..shape.len()).map(|i| format!("s{i:02}")).collect();
    let lemmas: Vec<String> = shape.iter().map(|(_, l)| format!("w{l}")).collect();
    let parents: Vec<Vec<&str>> = shape
        .iter()
        .map(|(ps, _)| {
            let set: BTreeSet<usize> = ps.iter().copied().collect();
            set.into_iter().map(|p| names[p].as_str()).collect()
        })
        .collect();
    let lemma_refs: Vec<[&str; 1]> = lemmas.iter().map(|l| [l.as_str()]).collect();
    let entries: Vec<(&str, &[&str], &[&str])> = (0..shape.len())
        .map(|i| (names[i].as_str(), parents[i].as_slice(), lemma_refs[i].as_slice()))
        .collect();
    Taxonomy::from_entries(&entries).unwrap()
}

/// Shortest root-to-node path length in nodes, by BFS over child links.
fn bfs_depth(t: &Taxonomy, target: &str) -> usize {
    let mut queue: VecDeque<(String, usize)> = t.roots().iter().map(|r| (r.clone(), 1)).collect();
    let mut seen = BTreeSet::new();
    while let Some((s, d)) = queue.pop_front() {
        if s == target {
            return d;
        }
        if !seen.insert(s.clone()) {
            continue;
        }
        for child in t.nodes() {
            if t.parents_of(child).unwrap().contains(&s) {
                queue.push_back((child.to_string(), d + 1));
            }
        }
    }
    unreachable!("every node descends from a root")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn depth_matches_bfs(shape in dag()) {
        let t = build(&shape);
        for s in t.nodes() {
            prop_assert_eq!(t.depth(s).unwrap(), bfs_depth(&t, s));
        }
    }

    #[test]
    fn lcs_depth_bounded_and_common(shape in dag()) {
        let t = build(&shape);
        let nodes: Vec<&str> = t.nodes().collect();
        for a in &nodes {
            for b in &nodes {
                if let Some(l) = t.lcs(a, b).unwrap() {
                    let dl = t.depth(l).unwrap();
                    prop_assert!(dl <= t.depth(a).unwrap().min(t.depth(b).unwrap()));
                    prop_assert!(t.ancestors(a).unwrap().contains(l));
                    prop_assert!(t.ancestors(b).unwrap().contains(l));
                    let cap = t.depth(a).unwrap().min(t.depth(b).unwrap());
                    for c in t.ancestors(a).unwrap().intersection(&t.ancestors(b).unwrap()) {
                        let dc = t.depth(c).unwrap();
                        prop_assert!(dc > cap || dc <= dl);
                    }
                }
                prop_assert_eq!(t.lcs(a, b).unwrap(), t.lcs(b, a).unwrap());
            }
        }
    }

    #[test]
    fn wu_palmer_symmetric_in_range(shape in dag(), a in 0usize..7, b in 0usize..7) {
        let t = build(&shape);
        let (la, lb) = (format!("w{a}"), format!("w{b}"));
        let x = t.wu_palmer(&la, &lb);
        prop_assert_eq!(x, t.wu_palmer(&lb, &la));
        prop_assert!((0.0..=1.0).contains(&x));
        if la == lb {
            prop_assert_eq!(x, 1.0);
        }
    }

    #[test]
    fn file_round_trip(shape in dag()) {
        let t = build(&shape);
        let mut buf = Vec::new();
        write_taxonomy(&mut buf, &t).unwrap();
        let back = read_taxonomy(buf.as_slice()).unwrap();
        let nodes: Vec<&str> = t.nodes().collect();
        prop_assert_eq!(back.nodes().collect::<Vec<_>>(), nodes.clone());
        for s in &nodes {
            prop_assert_eq!(back.depth(s).unwrap(), t.depth(s).unwrap());
        }
        for l in 0..6 {
            prop_assert_eq!(back.wu_palmer("w0", &format!("w{l}")), t.wu_palmer("w0", &format!("w{l}")));
        }
    }
}

#[test]
fn diamond_uses_shortest_path() {
    let t = Taxonomy::from_entries(&[
        ("root", &[], &[]),
        ("a", &["root"], &[]),
        ("b", &["root"], &[]),
        ("deep", &["a"], &[]),
        ("c", &["b", "deep"], &[]),
    ])
    .unwrap();
    assert_eq!(t.depth("c").unwrap(), 3);
}

#[test]
fn shortcut_edge_keeps_similarity_in_range() {
    // c hangs off both the root and y, so depth(c) = 2 < depth(y) = 3
    let t = Taxonomy::from_entries(&[
        ("root", &[], &[]),
        ("x", &["root"], &[]),
        ("y", &["x"], &["why"]),
        ("c", &["root", "y"], &["see"]),
    ])
    .unwrap();
    assert_eq!(t.lcs("c", "y").unwrap(), Some("x"));
    assert!((t.wu_palmer("see", "why") - 0.8).abs() < 1e-12);
}
