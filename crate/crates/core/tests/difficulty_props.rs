use cdcr_core::corpus::{Mention, MentionPair, PairLabel};
use cdcr_core::difficulty::{
    categorize, label_means, pair_similarity, read_categories, write_categories, CategorizedPair,
    DifficultyCategory, SimilarityComponents,
};
use cdcr_core::taxonomy::Taxonomy;
use proptest::prelude::*;

fn mention(id: &str, doc: &str, topic: &str, lemma: &str) -> Mention {
    Mention {
        mention_id: id.into(),
        doc_id: doc.into(),
        topic_id: topic.into(),
        subtopic_id: None,
        sentence: format!("they {lemma} it"),
        trigger_text: lemma.into(),
        trigger_lemma: lemma.into(),
        token_span: (1, 1),
        gold_cluster: None,
    }
}

fn taxonomy() -> Taxonomy {
    Taxonomy::from_entries(&[
        ("event", &[], &[]),
        ("attack.n", &["event"], &["attack", "strike"]),
        ("bomb.v", &["attack.n"], &["bomb"]),
        ("quake.n", &["event"], &["quake"]),
    ])
    .unwrap()
}

fn nonzero_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len).prop_filter("needs nonzero halves", |v| {
        let h = v.len() / 2;
        v[..h].iter().any(|x| x.abs() > 1e-3) && v[h..].iter().any(|x| x.abs() > 1e-3)
    })
}

const LEMMAS: [&str; 5] = ["attack", "strike", "bomb", "quake", "unlisted"];

proptest! {
    #[test]
    fn swapping_pair_order_keeps_components(
        la in 0usize..5, lb in 0usize..5, same_doc in any::<bool>(), same_topic in any::<bool>(),
        ab in nonzero_vec(8), ba in nonzero_vec(8),
    ) {
        let t = taxonomy();
        let doc_b = if same_doc { "d1" } else { "d2" };
        let topic_b = if same_topic || same_doc { "t1" } else { "t2" };
        let x = mention("x", "d1", "t1", LEMMAS[la]);
        let y = mention("y", doc_b, topic_b, LEMMAS[lb]);
        let p = MentionPair::new(&x, &y, PairLabel::Unknown).unwrap();
        let q = MentionPair::new(&y, &x, PairLabel::Unknown).unwrap();
        let c1 = pair_similarity(&p, LEMMAS[la], LEMMAS[lb], &t, &ab, &ba).unwrap();
        let c2 = pair_similarity(&q, LEMMAS[lb], LEMMAS[la], &t, &ba, &ab).unwrap();
        prop_assert_eq!(c1, c2);
        prop_assert!((c1.total - (c1.same_topic + c1.same_doc + c1.wu_palmer + c1.cosine_bidir)).abs() < 1e-12);
        prop_assert!(c1.total >= -1.0 && c1.total <= 4.0);
    }

    #[test]
    fn categories_partition_by_label_and_mean(
        rows in prop::collection::vec((any::<bool>(), 0.0f64..4.0), 2..60),
    ) {
        prop_assume!(rows.iter().any(|r| r.0) && rows.iter().any(|r| !r.0));
        let labelled: Vec<(PairLabel, f64)> = rows
            .iter()
            .map(|&(pos, t)| (if pos { PairLabel::Coreferent } else { PairLabel::NonCoreferent }, t))
            .collect();
        let means = label_means(labelled.iter().copied(), "c").unwrap();
        let pos: Vec<f64> = rows.iter().filter(|r| r.0).map(|r| r.1).collect();
        let neg: Vec<f64> = rows.iter().filter(|r| !r.0).map(|r| r.1).collect();
        prop_assert!((means.mean_pos - pos.iter().sum::<f64>() / pos.len() as f64).abs() < 1e-12);
        prop_assert!((means.mean_neg - neg.iter().sum::<f64>() / neg.len() as f64).abs() < 1e-12);
        for (label, t) in labelled {
            let cat = categorize(t, label, &means).unwrap();
            let want = match label {
                PairLabel::Coreferent if t > means.mean_pos => DifficultyCategory::EasyPos,
                PairLabel::Coreferent => DifficultyCategory::HardPos,
                _ if t > means.mean_neg => DifficultyCategory::HardNeg,
                _ => DifficultyCategory::EasyNeg,
            };
            prop_assert_eq!(cat, want);
        }
    }

    #[test]
    fn category_file_round_trip(rows in prop::collection::vec((any::<bool>(), -1.0f64..1.0, 0.0f64..1.0, any::<bool>()), 1..20)) {
        let cats: Vec<CategorizedPair> = rows
            .iter()
            .enumerate()
            .map(|(i, &(pos, cos, wup, hard))| {
                let x = mention(&format!("a{i:03}"), "d1", "t1", "attack");
                let y = mention(&format!("b{i:03}"), "d2", "t1", "bomb");
                let label = if pos { PairLabel::Coreferent } else { PairLabel::NonCoreferent };
                let category = match (pos, hard) {
                    (true, false) => DifficultyCategory::EasyPos,
                    (true, true) => DifficultyCategory::HardPos,
                    (false, false) => DifficultyCategory::EasyNeg,
                    (false, true) => DifficultyCategory::HardNeg,
                };
                CategorizedPair {
                    pair: MentionPair::new(&x, &y, label).unwrap(),
                    components: SimilarityComponents::new(true, false, wup, cos),
                    category,
                }
            })
            .collect();
        let mut buf = Vec::new();
        write_categories(&mut buf, &cats).unwrap();
        let back = read_categories(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), cats.len());
        for (a, b) in back.iter().zip(&cats) {
            prop_assert_eq!(&a.pair, &b.pair);
            prop_assert_eq!(a.category, b.category);
            prop_assert!((a.components.total - b.components.total).abs() < 1e-9);
        }
    }
}
