//! Semantic/discourse similarity of mention pairs and easy/hard categories.
//!
//! Categories are derived from gold labels and exist for evaluation and
//! routing only. Nothing in the scorer or map-fitting paths reads them.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, MentionPair, PairKey, PairLabel};
use crate::embedstore::{EmbeddingStore, Modality};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::taxonomy::Taxonomy;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityComponents {
    pub same_topic: f64,
    pub same_doc: f64,
    pub wu_palmer: f64,
    pub cosine_bidir: f64,
    pub total: f64,
}

impl SimilarityComponents {
    pub fn new(same_topic: bool, same_doc: bool, wu_palmer: f64, cosine_bidir: f64) -> Self {
        let same_topic = if same_topic { 1.0 } else { 0.0 };
        let same_doc = if same_doc { 1.0 } else { 0.0 };
        Self {
            same_topic,
            same_doc,
            wu_palmer,
            cosine_bidir,
            total: same_topic + same_doc + wu_palmer + cosine_bidir,
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Invalid("cosine of a zero-norm vector is undefined".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine between the two halves of a cross-encoded sentence pair vector
/// `[enc(first sentence) | enc(second sentence)]`.
pub fn split_cosine(joint: &[f64]) -> Result<f64> {
    if joint.is_empty() || !joint.len().is_multiple_of(2) {
        return Err(Error::Invalid(format!(
            "sentence-pair vector must have even positive length, got {}",
            joint.len()
        )));
    }
    let (x, y) = joint.split_at(joint.len() / 2);
    cosine(x, y)
}

/// Four-part similarity. `sent_ab` / `sent_ba` are the cross-encoded sentence
/// pair vectors with A read first and B read first respectively.
pub fn pair_similarity(
    pair: &MentionPair,
    lemma_a: &str,
    lemma_b: &str,
    taxonomy: &Taxonomy,
    sent_ab: &[f64],
    sent_ba: &[f64],
) -> Result<SimilarityComponents> {
    let cos = (split_cosine(sent_ab)? + split_cosine(sent_ba)?) / 2.0;
    Ok(SimilarityComponents::new(
        pair.same_topic,
        pair.same_doc,
        taxonomy.wu_palmer(lemma_a, lemma_b),
        cos,
    ))
}

/// Looks up lemmas in `corpus` and ordered sentence-pair vectors in `store`.
pub fn pair_similarity_from_store(
    pair: &MentionPair,
    corpus: &Corpus,
    taxonomy: &Taxonomy,
    store: &EmbeddingStore,
    sentence_encoder: &str,
) -> Result<SimilarityComponents> {
    let fetch = |x: &str, y: &str| -> Result<Vec<f64>> {
        store
            .ordered_pair(Modality::Text, sentence_encoder, x, y)?
            .map(|v| v.iter().map(|&f| f as f64).collect())
            .ok_or_else(|| Error::MissingVector(format!("sentence pair `{x}`->`{y}`")))
    };
    let ab = fetch(&pair.a, &pair.b)?;
    let ba = fetch(&pair.b, &pair.a)?;
    let la = &corpus.mention(&pair.a)?.trigger_lemma;
    let lb = &corpus.mention(&pair.b)?.trigger_lemma;
    pair_similarity(pair, la, lb, taxonomy, &ab, &ba)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyCategory {
    EasyPos,
    HardPos,
    EasyNeg,
    HardNeg,
}

impl DifficultyCategory {
    pub const ALL: [DifficultyCategory; 4] = [
        DifficultyCategory::EasyPos,
        DifficultyCategory::HardPos,
        DifficultyCategory::EasyNeg,
        DifficultyCategory::HardNeg,
    ];

    pub fn is_hard(self) -> bool {
        matches!(self, DifficultyCategory::HardPos | DifficultyCategory::HardNeg)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DifficultyCategory::EasyPos => "easy_pos",
            DifficultyCategory::HardPos => "hard_pos",
            DifficultyCategory::EasyNeg => "easy_neg",
            DifficultyCategory::HardNeg => "hard_neg",
        }
    }
}

impl fmt::Display for DifficultyCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DifficultyCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DifficultyCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown category `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMeans {
    pub mean_pos: f64,
    pub mean_neg: f64,
    pub corpus: String,
}

/// Per-label mean of similarity totals. Unknown labels are ignored.
pub fn label_means<I>(totals: I, corpus: &str) -> Result<LabelMeans>
where
    I: IntoIterator<Item = (PairLabel, f64)>,
{
    let (mut sp, mut np, mut sn, mut nn) = (0.0, 0usize, 0.0, 0usize);
    for (label, total) in totals {
        match label {
            PairLabel::Coreferent => {
                sp += total;
                np += 1;
            }
            PairLabel::NonCoreferent => {
                sn += total;
                nn += 1;
            }
            PairLabel::Unknown => {}
        }
    }
    if np == 0 || nn == 0 {
        return Err(Error::Invalid(format!(
            "label means need both classes (positives: {np}, negatives: {nn})"
        )));
    }
    Ok(LabelMeans {
        mean_pos: sp / np as f64,
        mean_neg: sn / nn as f64,
        corpus: corpus.to_string(),
    })
}

/// Strictly above the label mean is easy for positives and hard for
/// negatives; a tie falls to hard_pos / easy_neg.
pub fn categorize(total: f64, label: PairLabel, means: &LabelMeans) -> Result<DifficultyCategory> {
    match label {
        PairLabel::Coreferent if total > means.mean_pos => Ok(DifficultyCategory::EasyPos),
        PairLabel::Coreferent => Ok(DifficultyCategory::HardPos),
        PairLabel::NonCoreferent if total > means.mean_neg => Ok(DifficultyCategory::HardNeg),
        PairLabel::NonCoreferent => Ok(DifficultyCategory::EasyNeg),
        PairLabel::Unknown => Err(Error::Invalid("cannot categorize an unlabeled pair".into())),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategorizedPair {
    pub pair: MentionPair,
    pub components: SimilarityComponents,
    pub category: DifficultyCategory,
}

/// Computes label means over the labeled pairs and categorizes each of them.
/// Unlabeled pairs are dropped.
pub fn categorize_all(
    scored: Vec<(MentionPair, SimilarityComponents)>,
    corpus_name: &str,
) -> Result<(Vec<CategorizedPair>, LabelMeans)> {
    let means = label_means(scored.iter().map(|(p, c)| (p.label, c.total)), corpus_name)?;
    let mut out = Vec::with_capacity(scored.len());
    for (pair, components) in scored {
        if !pair.label.is_known() {
            continue;
        }
        let category = categorize(components.total, pair.label, &means)?;
        out.push(CategorizedPair {
            pair,
            components,
            category,
        });
    }
    Ok((out, means))
}

const CATEGORY_HEADER: &str =
    "pair_a,pair_b,label,same_topic,same_doc,wu_palmer,cosine,total,category";

pub fn write_categories<W: Write>(mut w: W, rows: &[CategorizedPair]) -> std::io::Result<()> {
    writeln!(w, "{CATEGORY_HEADER}")?;
    for r in rows {
        let c = &r.components;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.pair.a,
            r.pair.b,
            r.pair.label.as_str(),
            c.same_topic,
            c.same_doc,
            c.wu_palmer,
            c.cosine_bidir,
            c.total,
            r.category
        )?;
    }
    Ok(())
}

pub fn read_categories<R: BufRead>(reader: R) -> Result<Vec<CategorizedPair>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if line.trim().is_empty() || line.starts_with('#') || line == CATEGORY_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::parse(i + 1, format!("expected 9 fields, got {}", f.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(i + 1, format!("bad number `{s}`")))
        };
        let label: PairLabel = f[2].parse().map_err(|e: Error| Error::parse(i + 1, e.to_string()))?;
        let (same_topic, same_doc) = (num(f[3])?, num(f[4])?);
        let components = SimilarityComponents {
            same_topic,
            same_doc,
            wu_palmer: num(f[5])?,
            cosine_bidir: num(f[6])?,
            total: num(f[7])?,
        };
        let key = PairKey::new(f[0], f[1]);
        out.push(CategorizedPair {
            pair: MentionPair {
                a: key.a,
                b: key.b,
                label,
                same_doc: same_doc != 0.0,
                same_topic: same_topic != 0.0,
            },
            components,
            category: f[8]
                .parse()
                .map_err(|e: Error| Error::parse(i + 1, e.to_string()))?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub min_total: f64,
    pub max_total: f64,
    pub bins: usize,
    /// Only categories that occur.
    pub counts: BTreeMap<DifficultyCategory, Vec<usize>>,
}

impl Histogram {
    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let w = (self.max_total - self.min_total) / self.bins as f64;
        (
            self.min_total + w * bin as f64,
            self.min_total + w * (bin + 1) as f64,
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "category,bin,lo,hi,count")?;
        for (cat, counts) in &self.counts {
            for (b, n) in counts.iter().enumerate() {
                let (lo, hi) = self.bin_edges(b);
                writeln!(w, "{cat},{b},{lo},{hi},{n}")?;
            }
        }
        Ok(())
    }
}

/// Per-category counts over equal-width bins spanning the observed totals.
pub fn difficulty_histogram(
    rows: &[(f64, DifficultyCategory)],
    bins: usize,
) -> Result<Histogram> {
    if bins < 1 {
        return Err(Error::Invalid("histogram needs at least one bin".into()));
    }
    let min_total = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let max_total = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let mut counts: BTreeMap<DifficultyCategory, Vec<usize>> = BTreeMap::new();
    let width = (max_total - min_total) / bins as f64;
    for &(total, cat) in rows {
        let idx = if width > 0.0 {
            (((total - min_total) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts.entry(cat).or_insert_with(|| vec![0; bins])[idx] += 1;
    }
    Ok(Histogram {
        min_total: if rows.is_empty() { 0.0 } else { min_total },
        max_total: if rows.is_empty() { 0.0 } else { max_total },
        bins,
        counts,
    })
}
