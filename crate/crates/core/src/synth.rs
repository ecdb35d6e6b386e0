//! Synthetic multimodal corpus with a known easy/hard structure.
//!
//! Each topic holds clusters in twos. Cluster `2p` has one "collider"
//! mention borrowing the lemma of cluster `2p+1`; cluster `2p+1` has one
//! mention with a unique lemma. Everything else uses the cluster's own lemma.
//! Text pair blocks encode lemma agreement only, so text is right on easy
//! pairs and wrong on hard ones. Vision pair blocks carry the gold label on
//! hard pairs and nothing on easy ones.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::binio::write_atomic;
use crate::corpus::{write_corpus, Corpus, Mention, Split, SynonymSet};
use crate::embedstore::{EmbeddingFile, Modality};
use crate::error::{Error, Result};
use crate::pipeline::RunConfig;
use crate::scorer::ScorerConfig;
use crate::taxonomy::{write_taxonomy, Taxonomy};

pub const TEXT_ENCODER: &str = "synth-text";
pub const VISION_ENCODER: &str = "synth-vision";
pub const SENTENCE_ENCODER: &str = "synth-sentpair";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub train_topics: usize,
    pub test_topics: usize,
    /// Must be even.
    pub clusters_per_topic: usize,
    /// At least 2.
    pub mentions_per_cluster: usize,
    pub hidden_dim: usize,
    pub sentence_dim: usize,
    /// Scale of the pair-block signal.
    pub signal: f64,
    /// Scale of the per-lemma and per-mention argument vectors.
    pub arg_scale: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train_topics: 16,
            test_topics: 3,
            clusters_per_topic: 4,
            mentions_per_cluster: 5,
            hidden_dim: 16,
            sentence_dim: 8,
            signal: 2.0,
            arg_scale: 0.25,
            noise: 0.1,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthFixture {
    pub config: SynthConfig,
    pub train: Corpus,
    pub test: Corpus,
    pub taxonomy: Taxonomy,
    pub synonyms: Vec<(String, String)>,
    pub text: EmbeddingFile,
    pub vision: EmbeddingFile,
    pub sentences: EmbeddingFile,
}

/// File names written by [`SynthFixture::write_to`].
pub mod files {
    pub const TRAIN: &str = "train.jsonl";
    pub const TEST: &str = "test.jsonl";
    pub const TAXONOMY: &str = "taxonomy.jsonl";
    pub const SYNONYMS: &str = "synonyms.tsv";
    pub const TEXT: &str = "text.emb";
    pub const VISION: &str = "vision.emb";
    pub const SENTENCES: &str = "sentences.emb";
}

impl SynthFixture {
    pub fn synonym_set(&self) -> SynonymSet {
        self.synonyms.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect()
    }

    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let text_file = |f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>, name: &str| {
            let mut buf = Vec::new();
            f(&mut buf).map_err(|e| Error::io(dir.join(name), e))?;
            write_atomic(dir.join(name), &buf)
        };
        text_file(&|b| write_corpus(b, &self.train), files::TRAIN)?;
        text_file(&|b| write_corpus(b, &self.test), files::TEST)?;
        text_file(&|b| write_taxonomy(b, &self.taxonomy), files::TAXONOMY)?;
        text_file(
            &|b| {
                for (x, y) in &self.synonyms {
                    writeln!(b, "{x}\t{y}")?;
                }
                Ok(())
            },
            files::SYNONYMS,
        )?;
        self.text.write(dir.join(files::TEXT))?;
        self.vision.write(dir.join(files::VISION))?;
        self.sentences.write(dir.join(files::SENTENCES))
    }
}

/// Scorer settings for the fixture: default optimizer settings with a
/// smaller head, since the inputs are only 4H = 64 wide.
pub fn fixture_scorer_config() -> ScorerConfig {
    ScorerConfig {
        hidden1: 64,
        hidden2: 32,
        ..ScorerConfig::default()
    }
}

/// Run configuration for a fixture written to `dir`.
pub fn run_config(dir: &Path, output_dir: &Path) -> RunConfig {
    RunConfig {
        train_corpus: dir.join(files::TRAIN),
        test_corpus: dir.join(files::TEST),
        embeddings: vec![
            dir.join(files::TEXT),
            dir.join(files::VISION),
            dir.join(files::SENTENCES),
        ],
        taxonomy: dir.join(files::TAXONOMY),
        synonyms: Some(dir.join(files::SYNONYMS)),
        output_dir: output_dir.to_path_buf(),
        text_encoder: TEXT_ENCODER.into(),
        vision_encoder: VISION_ENCODER.into(),
        sentence_encoder: SENTENCE_ENCODER.into(),
        scorer: fixture_scorer_config(),
        ..RunConfig::default()
    }
}

struct Gen {
    rng: ChaCha8Rng,
    noise: f64,
}

impl Gen {
    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn gaussian(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    fn unit(&mut self, n: usize) -> Vec<f64> {
        let v = self.gaussian(n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect()
    }

    fn noisy(&mut self, base: &[f64], scale: f64) -> Vec<f32> {
        base.iter()
            .map(|&b| (b * scale + self.noise * self.normal()) as f32)
            .collect()
    }

    /// `[x | y]` with unit `x`, unit `y` and `cos(x, y) = c`.
    fn sentence_pair(&mut self, dim: usize, c: f64) -> Vec<f32> {
        let x = self.unit(dim);
        let mut z = self.gaussian(dim);
        let proj: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        z.iter_mut().zip(&x).for_each(|(a, b)| *a -= proj * b);
        let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = (1.0 - c * c).sqrt();
        let y: Vec<f64> = x.iter().zip(&z).map(|(a, b)| c * a + s * b / zn).collect();
        x.iter().chain(&y).map(|&v| v as f32).collect()
    }
}

struct Planned {
    mention: Mention,
    cluster: usize,
}

fn plan_split(cfg: &SynthConfig, split: Split, topics: usize) -> Vec<Planned> {
    let mut out = Vec::new();
    for t in 0..topics {
        for c in 0..cfg.clusters_per_topic {
            let own = format!("{split}-t{t}-e{c}");
            for i in 0..cfg.mentions_per_cluster {
                let last = i + 1 == cfg.mentions_per_cluster;
                let lemma = match (last, c % 2) {
                    (true, 0) => format!("{split}-t{t}-e{}", c + 1),
                    (true, _) => format!("{split}-t{t}-u{c}"),
                    _ => own.clone(),
                };
                let id = format!("{split}-t{t}-c{c}-m{i}");
                out.push(Planned {
                    mention: Mention {
                        mention_id: id.clone(),
                        doc_id: format!("{id}-doc"),
                        topic_id: format!("{split}-t{t}"),
                        subtopic_id: None,
                        sentence: format!("reports say the {lemma} happened"),
                        trigger_text: lemma.clone(),
                        trigger_lemma: lemma,
                        token_span: (3, 3),
                        gold_cluster: Some(format!("{split}-t{t}-c{c}")),
                    },
                    cluster: t * cfg.clusters_per_topic + c,
                });
            }
        }
    }
    out
}

fn taxonomy_and_synonyms(cfg: &SynthConfig) -> Result<(Taxonomy, Vec<(String, String)>)> {
    let mut lines: Vec<(String, Vec<String>, Vec<String>)> =
        vec![("event".into(), vec![], vec![])];
    let mut synonyms = Vec::new();
    for (split, topics) in [(Split::Train, cfg.train_topics), (Split::Test, cfg.test_topics)] {
        for t in 0..topics {
            let topic = format!("{split}-t{t}");
            lines.push((topic.clone(), vec!["event".into()], vec![]));
            for c in 0..cfg.clusters_per_topic {
                let lemma = format!("{split}-t{t}-e{c}");
                lines.push((format!("{lemma}.s"), vec![topic.clone()], vec![lemma.clone()]));
                if c % 2 == 1 {
                    let u = format!("{split}-t{t}-u{c}");
                    lines.push((format!("{u}.s"), vec!["event".into()], vec![u]));
                }
                if c + 2 < cfg.clusters_per_topic {
                    synonyms.push((lemma, format!("{split}-t{t}-e{}", c + 2)));
                }
            }
        }
    }
    let borrowed: Vec<(&str, Vec<&str>, Vec<&str>)> = lines
        .iter()
        .map(|(s, p, l)| {
            (
                s.as_str(),
                p.iter().map(String::as_str).collect(),
                l.iter().map(String::as_str).collect(),
            )
        })
        .collect();
    let entries: Vec<(&str, &[&str], &[&str])> = borrowed
        .iter()
        .map(|(s, p, l)| (*s, p.as_slice(), l.as_slice()))
        .collect();
    Ok((Taxonomy::from_entries(&entries)?, synonyms))
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthFixture> {
    if cfg.clusters_per_topic < 2 || !cfg.clusters_per_topic.is_multiple_of(2) {
        return Err(Error::Invalid("clusters_per_topic must be even and at least 2".into()));
    }
    if cfg.mentions_per_cluster < 2 || cfg.hidden_dim == 0 || cfg.sentence_dim < 2 {
        return Err(Error::Invalid("synthetic sizes too small".into()));
    }
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        noise: cfg.noise,
    };
    let h = cfg.hidden_dim;
    let u = g.unit(h);
    let w = g.unit(h);

    let mut text = EmbeddingFile::new(Modality::Text, TEXT_ENCODER, h);
    let mut vision = EmbeddingFile::new(Modality::Vision, VISION_ENCODER, h);
    let mut sentences = EmbeddingFile::new(Modality::Text, SENTENCE_ENCODER, 2 * cfg.sentence_dim);
    let mut corpora = Vec::new();

    for (split, topics) in [(Split::Train, cfg.train_topics), (Split::Test, cfg.test_topics)] {
        let planned = plan_split(cfg, split, topics);
        let mut prototypes: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for p in &planned {
            let proto = match prototypes.get(&p.mention.trigger_lemma) {
                Some(v) => v.clone(),
                None => {
                    let v = g.gaussian(h);
                    prototypes.insert(p.mention.trigger_lemma.clone(), v.clone());
                    v
                }
            };
            text.push_mention(&p.mention.mention_id, g.noisy(&proto, cfg.arg_scale));
            let vis = g.gaussian(h);
            vision.push_mention(&p.mention.mention_id, g.noisy(&vis, cfg.arg_scale));
        }
        for x in &planned {
            for y in &planned {
                if x.mention.mention_id == y.mention.mention_id
                    || x.mention.topic_id != y.mention.topic_id
                {
                    continue;
                }
                let same_lemma = x.mention.trigger_lemma == y.mention.trigger_lemma;
                let coref = x.cluster == y.cluster;
                let text_sign = if same_lemma { 1.0 } else { -1.0 };
                let vision_sign = match (same_lemma != coref, coref) {
                    (true, true) => 1.0,
                    (true, false) => -1.0,
                    (false, _) => 0.0,
                };
                let (a, b) = (&x.mention.mention_id, &y.mention.mention_id);
                text.push_pair(a, b, g.noisy(&u, cfg.signal * text_sign));
                vision.push_pair(a, b, g.noisy(&w, cfg.signal * vision_sign));
                let target = if same_lemma { 0.6 } else { 0.1 };
                let jitter = g.rng.random_range(-0.05..0.05);
                sentences.push_pair(a, b, g.sentence_pair(cfg.sentence_dim, target + jitter));
            }
        }
        let name = format!("synth-{split}");
        corpora.push(Corpus::new(name, split, planned.into_iter().map(|p| p.mention).collect())?);
    }
    let (taxonomy, synonyms) = taxonomy_and_synonyms(cfg)?;
    let test = corpora.pop().expect("two splits");
    let train = corpora.pop().expect("two splits");
    Ok(SynthFixture {
        config: cfg.clone(),
        train,
        test,
        taxonomy,
        synonyms,
        text,
        vision,
        sentences,
    })
}
