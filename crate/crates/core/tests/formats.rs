use std::collections::{BTreeMap, BTreeSet};

use cdcr_core::clusterer::{read_conll, write_conll, ClusterSet};
use cdcr_core::corpus::{load_corpus, read_corpus, write_corpus, Corpus, Mention, Split};
use cdcr_core::embedstore::{
    load_store, Direction, EmbeddingFile, EmbeddingStore, Modality, PairFallback,
};
use cdcr_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mention(id: String, doc: String, topic: String, cluster: String, len: usize, span: (usize, usize)) -> Mention {
    let sentence = (0..len).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
    Mention {
        mention_id: id,
        doc_id: doc,
        topic_id: topic,
        subtopic_id: None,
        trigger_text: (span.0..=span.1).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "),
        trigger_lemma: "w".into(),
        sentence,
        token_span: span,
        gold_cluster: Some(cluster),
    }
}

/// Hand-rolled EMB1 encoder following the documented layout.
fn reference_emb1(file: &EmbeddingFile) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(b"EMB1");
    b.extend_from_slice(&1u32.to_le_bytes());
    b.push(match file.modality {
        Modality::Text => 0,
        Modality::Vision => 1,
    });
    b.extend_from_slice(&(file.encoder.len() as u16).to_le_bytes());
    b.extend_from_slice(file.encoder.as_bytes());
    b.extend_from_slice(&(file.dim as u32).to_le_bytes());
    b.extend_from_slice(&(file.records.len() as u64).to_le_bytes());
    for r in &file.records {
        let (id, kind) = match &r.id {
            cdcr_core::embedstore::RecordId::Mention(m) => (m.clone(), 0u8),
            cdcr_core::embedstore::RecordId::Pair(a, c) => (format!("{a}\u{0}{c}"), 1u8),
        };
        b.extend_from_slice(&(id.len() as u16).to_le_bytes());
        b.extend_from_slice(id.as_bytes());
        b.push(kind);
        for v in &r.vec {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&b);
    b.extend_from_slice(&crc.to_le_bytes());
    b
}

fn emb_file() -> impl Strategy<Value = EmbeddingFile> {
    (any::<bool>(), "[a-z0-9-]{1,12}", 1usize..6, 0usize..8).prop_flat_map(|(vision, enc, dim, n)| {
        prop::collection::vec(prop::collection::vec(-1e3f32..1e3, dim), n).prop_map(move |vecs| {
            let modality = if vision { Modality::Vision } else { Modality::Text };
            let mut f = EmbeddingFile::new(modality, enc.clone(), dim);
            for (i, v) in vecs.into_iter().enumerate() {
                if i % 3 == 2 {
                    f.push_pair(format!("m{}", i - 1), format!("m{}", i - 2), v);
                } else {
                    f.push_mention(format!("m{i}"), v);
                }
            }
            f
        })
    })
}

proptest! {
    #[test]
    fn emb1_matches_reference_layout_and_round_trips(f in emb_file()) {
        let bytes = f.to_bytes().unwrap();
        prop_assert_eq!(&bytes, &reference_emb1(&f));
        prop_assert_eq!(EmbeddingFile::from_bytes(&bytes).unwrap(), f);
    }

    #[test]
    fn emb1_single_byte_corruption_detected(f in emb_file(), pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let mut bytes = f.to_bytes().unwrap();
        let i = pos.index(bytes.len());
        bytes[i] ^= flip;
        prop_assert!(EmbeddingFile::from_bytes(&bytes).is_err());
    }

    #[test]
    fn conll_round_trip_preserves_partition(labels in prop::collection::vec((0usize..4, 0usize..3, 1usize..6), 1..25)) {
        let mentions: Vec<Mention> = labels
            .iter()
            .enumerate()
            .map(|(i, &(c, d, len))| {
                let start = i % len;
                let end = (start + i % 2).min(len - 1);
                mention(format!("m{i:02}"), format!("d{d}"), "t0".into(), format!("c{c}"), len, (start, end))
            })
            .collect();
        let corpus = Corpus::new("x", Split::Test, mentions).unwrap();
        let gold = ClusterSet::gold(&corpus).unwrap();
        let mut buf = Vec::new();
        write_conll(&mut buf, &corpus, &gold).unwrap();
        let back = read_conll(buf.as_slice()).unwrap();
        prop_assert_eq!(back.mention_count(), corpus.len());

        // blocks are emitted in (doc, mention id) order
        let mut order: Vec<&Mention> = corpus.mentions().iter().collect();
        order.sort_by(|x, y| (&x.doc_id, &x.mention_id).cmp(&(&y.doc_id, &y.mention_id)));
        let rename: BTreeMap<String, String> = order
            .iter()
            .enumerate()
            .map(|(block, m)| {
                (format!("{}#{}:{}-{}", m.doc_id, block, m.token_span.0, m.token_span.1), m.mention_id.clone())
            })
            .collect();
        let renamed: BTreeSet<BTreeSet<String>> = back
            .clusters()
            .iter()
            .map(|c| c.iter().map(|id| rename[id].clone()).collect())
            .collect();
        let want: BTreeSet<BTreeSet<String>> = gold.clusters().iter().cloned().collect();
        prop_assert_eq!(renamed, want);
    }

    #[test]
    fn corpus_jsonl_round_trip(labels in prop::collection::vec((0usize..4, 0usize..3), 1..20)) {
        let mentions: Vec<Mention> = labels
            .iter()
            .enumerate()
            .map(|(i, &(c, d))| mention(format!("m{i}"), format!("d{d}"), format!("t{}", d % 2), format!("c{c}"), 3, (1, 1)))
            .collect();
        let corpus = Corpus::new("x", Split::Train, mentions).unwrap();
        let mut buf = Vec::new();
        write_corpus(&mut buf, &corpus).unwrap();
        let back = read_corpus(buf.as_slice(), "x", Split::Train).unwrap();
        prop_assert_eq!(back.mentions(), corpus.mentions());
    }
}

#[test]
fn full_scale_corpus_and_store() {
    let dir = tempfile::tempdir().unwrap();
    let n = 1780;
    let h = 768;
    let mentions: Vec<Mention> = (0..n)
        .map(|i| {
            mention(
                format!("m{i:04}"),
                format!("t{}-d{}", i % 43, i % 500),
                format!("t{}", i % 43),
                format!("c{}", i / 4),
                8,
                (2, 2),
            )
        })
        .collect();
    let corpus = Corpus::new("full-scale", Split::Test, mentions).unwrap();
    let cpath = dir.path().join("test.jsonl");
    let mut buf = Vec::new();
    write_corpus(&mut buf, &corpus).unwrap();
    std::fs::write(&cpath, buf).unwrap();
    let loaded = load_corpus(&cpath, Split::Test).unwrap();
    assert_eq!(loaded.len(), 1780);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut file = EmbeddingFile::new(Modality::Text, "enc", h);
    let mut expected = Vec::with_capacity(n);
    for m in loaded.mentions() {
        let v: Vec<f32> = (0..h).map(|_| rng.random_range(-1.0..1.0)).collect();
        expected.push(v.clone());
        file.push_mention(m.mention_id.clone(), v);
    }
    let epath = dir.path().join("text.emb");
    file.write(&epath).unwrap();
    let store = load_store(&epath, None).unwrap();
    assert_eq!(store.mention_count(Modality::Text, "enc").unwrap(), n);
    assert_eq!(store.dim(Modality::Text, "enc").unwrap(), h);
    for (m, v) in loaded.mentions().iter().zip(&expected) {
        assert_eq!(store.mention(Modality::Text, "enc", &m.mention_id).unwrap(), v.as_slice());
    }
    let rep = store
        .build_pair_representation("m0000", "m0001", Direction::AB, Modality::Text, "enc", PairFallback::Mean)
        .unwrap();
    assert_eq!(rep.vec.len(), 4 * h);
}

#[test]
fn mixed_dims_under_one_encoder_rejected() {
    let mut store = EmbeddingStore::new();
    let mut a = EmbeddingFile::new(Modality::Text, "enc", 8);
    a.push_mention("x", vec![0.0; 8]);
    let mut b = EmbeddingFile::new(Modality::Text, "enc", 16);
    b.push_mention("y", vec![0.0; 16]);
    store.add_file(a).unwrap();
    assert!(matches!(store.add_file(b), Err(Error::DimMismatch { .. })));
}
