//! Annotated event-mention corpora and candidate pair generation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

/// One annotated event trigger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub mention_id: String,
    pub doc_id: String,
    pub topic_id: String,
    #[serde(default)]
    pub subtopic_id: Option<String>,
    pub sentence: String,
    pub trigger_text: String,
    pub trigger_lemma: String,
    /// Inclusive whitespace-token indices into `sentence`.
    pub token_span: (usize, usize),
    /// `None` when the mention carries no gold annotation.
    #[serde(default)]
    pub gold_cluster: Option<String>,
}

impl Mention {
    pub fn tokens(&self) -> Vec<&str> {
        self.sentence.split_whitespace().collect()
    }

    pub fn normalized_lemma(&self) -> String {
        normalize_lemma(&self.trigger_lemma)
    }
}

/// NFC-normalizes and lowercases a lemma for comparison.
pub fn normalize_lemma(lemma: &str) -> String {
    lemma.nfc().collect::<String>().to_lowercase()
}

#[derive(Clone, Debug)]
pub struct Corpus {
    name: String,
    split: Split,
    mentions: Vec<Mention>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Validates invariants and indexes mentions by id.
    pub fn new(name: impl Into<String>, split: Split, mentions: Vec<Mention>) -> Result<Self> {
        let mut index = HashMap::with_capacity(mentions.len());
        let mut doc_topic: HashMap<&str, &str> = HashMap::new();
        for (i, m) in mentions.iter().enumerate() {
            validate_mention(m).map_err(|e| match e {
                Error::Invalid(msg) => Error::parse(i + 1, msg),
                other => other,
            })?;
            if index.insert(m.mention_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(m.mention_id.clone()));
            }
            match doc_topic.get(m.doc_id.as_str()) {
                Some(t) if *t != m.topic_id => {
                    return Err(Error::Invalid(format!(
                        "document `{}` referenced under topics `{}` and `{}`",
                        m.doc_id, t, m.topic_id
                    )));
                }
                Some(_) => {}
                None => {
                    doc_topic.insert(&m.doc_id, &m.topic_id);
                }
            }
        }
        Ok(Self {
            name: name.into(),
            split,
            mentions,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn mentions(&self) -> &[Mention] {
        &self.mentions
    }

    pub fn len(&self) -> usize {
        self.mentions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mentions.is_empty()
    }

    pub fn get(&self, mention_id: &str) -> Option<&Mention> {
        self.index.get(mention_id).map(|&i| &self.mentions[i])
    }

    pub fn mention(&self, mention_id: &str) -> Result<&Mention> {
        self.get(mention_id)
            .ok_or_else(|| Error::UnknownId(mention_id.to_string()))
    }

    pub fn mention_ids(&self) -> BTreeSet<String> {
        self.mentions.iter().map(|m| m.mention_id.clone()).collect()
    }

    pub fn documents(&self) -> BTreeSet<&str> {
        self.mentions.iter().map(|m| m.doc_id.as_str()).collect()
    }

    pub fn topics(&self) -> BTreeSet<&str> {
        self.mentions.iter().map(|m| m.topic_id.as_str()).collect()
    }

    /// Gold clusters keyed by cluster id, members sorted. Unannotated mentions are skipped.
    pub fn gold_clusters(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for m in &self.mentions {
            if let Some(c) = &m.gold_cluster {
                out.entry(c.clone()).or_default().insert(m.mention_id.clone());
            }
        }
        out
    }

    pub fn label(&self, a: &Mention, b: &Mention) -> PairLabel {
        match (&a.gold_cluster, &b.gold_cluster) {
            (Some(x), Some(y)) if x == y => PairLabel::Coreferent,
            (Some(_), Some(_)) => PairLabel::NonCoreferent,
            _ => PairLabel::Unknown,
        }
    }

    pub fn pair(&self, a: &str, b: &str) -> Result<MentionPair> {
        let (ma, mb) = (self.mention(a)?, self.mention(b)?);
        MentionPair::new(ma, mb, self.label(ma, mb))
    }
}

fn validate_mention(m: &Mention) -> Result<()> {
    if m.mention_id.is_empty() {
        return Err(Error::Invalid("empty mention_id".into()));
    }
    if m.doc_id.is_empty() || m.topic_id.is_empty() {
        return Err(Error::Invalid(format!(
            "mention `{}` has a dangling doc/topic reference",
            m.mention_id
        )));
    }
    if m.trigger_lemma.trim().is_empty() {
        return Err(Error::Invalid(format!(
            "mention `{}` has an empty trigger_lemma",
            m.mention_id
        )));
    }
    let n_tokens = m.sentence.split_whitespace().count();
    let (start, end) = m.token_span;
    if start > end || end >= n_tokens {
        return Err(Error::Invalid(format!(
            "mention `{}` span {:?} out of range for {} tokens",
            m.mention_id, m.token_span, n_tokens
        )));
    }
    if matches!(&m.gold_cluster, Some(c) if c.is_empty()) {
        return Err(Error::Invalid(format!(
            "mention `{}` has an empty gold_cluster",
            m.mention_id
        )));
    }
    Ok(())
}

/// Parses corpus JSONL from any reader. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R, name: &str, split: Split) -> Result<Corpus> {
    let mut mentions = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let m: Mention =
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if !seen.insert(m.mention_id.clone()) {
            return Err(Error::DuplicateId(m.mention_id));
        }
        validate_mention(&m).map_err(|e| match e {
            Error::Invalid(msg) => Error::parse(i + 1, msg),
            other => other,
        })?;
        mentions.push(m);
    }
    Corpus::new(name, split, mentions)
}

pub fn load_corpus(path: impl AsRef<Path>, split: Split) -> Result<Corpus> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_corpus(BufReader::new(file), &name, split)
}

pub fn write_corpus<W: Write>(mut w: W, corpus: &Corpus) -> std::io::Result<()> {
    for m in corpus.mentions() {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairLabel {
    Coreferent,
    NonCoreferent,
    Unknown,
}

impl PairLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PairLabel::Coreferent => "coreferent",
            PairLabel::NonCoreferent => "non-coreferent",
            PairLabel::Unknown => "unknown",
        }
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, PairLabel::Unknown)
    }
}

impl FromStr for PairLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coreferent" | "1" | "pos" => Ok(PairLabel::Coreferent),
            "non-coreferent" | "0" | "neg" => Ok(PairLabel::NonCoreferent),
            "unknown" => Ok(PairLabel::Unknown),
            other => Err(Error::Invalid(format!("unknown pair label `{other}`"))),
        }
    }
}

/// Unordered mention pair in canonical orientation (`a < b`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MentionPair {
    pub a: String,
    pub b: String,
    pub label: PairLabel,
    pub same_doc: bool,
    pub same_topic: bool,
}

impl MentionPair {
    pub fn new(x: &Mention, y: &Mention, label: PairLabel) -> Result<Self> {
        let (first, second) = match x.mention_id.cmp(&y.mention_id) {
            std::cmp::Ordering::Less => (x, y),
            std::cmp::Ordering::Greater => (y, x),
            std::cmp::Ordering::Equal => {
                return Err(Error::Invalid(format!(
                    "pair of mention `{}` with itself",
                    x.mention_id
                )))
            }
        };
        Ok(Self {
            a: first.mention_id.clone(),
            b: second.mention_id.clone(),
            label,
            same_doc: first.doc_id == second.doc_id,
            same_topic: first.topic_id == second.topic_id,
        })
    }

    pub fn key(&self) -> PairKey {
        PairKey {
            a: self.a.clone(),
            b: self.b.clone(),
        }
    }
}

/// Canonical identity of an unordered pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey {
    pub a: String,
    pub b: String,
}

impl PairKey {
    pub fn new(x: &str, y: &str) -> Self {
        if x <= y {
            Self {
                a: x.to_string(),
                b: y.to_string(),
            }
        } else {
            Self {
                a: y.to_string(),
                b: x.to_string(),
            }
        }
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SynonymSet {
    pairs: HashSet<(String, String)>,
}

impl SynonymSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts both orientations after normalization.
    pub fn insert(&mut self, x: &str, y: &str) {
        let (x, y) = (normalize_lemma(x), normalize_lemma(y));
        self.pairs.insert((x.clone(), y.clone()));
        self.pairs.insert((y, x));
    }

    pub fn contains(&self, x: &str, y: &str) -> bool {
        self.pairs.contains(&(normalize_lemma(x), normalize_lemma(y)))
    }

    /// Number of distinct unordered pairs.
    pub fn len(&self) -> usize {
        let self_pairs = self.pairs.iter().filter(|(x, y)| x == y).count();
        (self.pairs.len() + self_pairs) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<(S, S)> for SynonymSet {
    fn from_iter<I: IntoIterator<Item = (S, S)>>(iter: I) -> Self {
        let mut s = SynonymSet::new();
        for (x, y) in iter {
            s.insert(x.as_ref(), y.as_ref());
        }
        s
    }
}

/// Reads `lemma<TAB>lemma` lines. Blank lines and `#` comments are ignored.
pub fn read_synonyms<R: BufRead>(reader: R) -> Result<SynonymSet> {
    let mut set = SynonymSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(x), Some(y), None) if !x.trim().is_empty() && !y.trim().is_empty() => {
                set.insert(x.trim(), y.trim())
            }
            _ => return Err(Error::parse(i + 1, "expected two tab-separated lemmas")),
        }
    }
    Ok(set)
}

pub fn load_synonyms(path: impl AsRef<Path>) -> Result<SynonymSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_synonyms(BufReader::new(file))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PruningConfig {
    pub synonym_pairs: SynonymSet,
    pub oracle_keep_positives: bool,
    pub within_topic_only: bool,
}

impl Default for PruningConfig {
    fn default() -> Self {
        Self {
            synonym_pairs: SynonymSet::new(),
            oracle_keep_positives: false,
            within_topic_only: true,
        }
    }
}

/// Candidate pairs in canonical `(a, b)` order. A pair survives pruning when
/// its lemmas match, are listed as synonyms, or (under the oracle policy)
/// the pair is gold-coreferent.
pub fn generate_pairs(corpus: &Corpus, config: &PruningConfig) -> Vec<MentionPair> {
    let mut sorted: Vec<&Mention> = corpus.mentions().iter().collect();
    sorted.sort_by(|x, y| x.mention_id.cmp(&y.mention_id));
    let lemmas: Vec<String> = sorted.iter().map(|m| m.normalized_lemma()).collect();

    let mut out = Vec::new();
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            let (x, y) = (sorted[i], sorted[j]);
            if config.within_topic_only && x.topic_id != y.topic_id {
                continue;
            }
            let label = corpus.label(x, y);
            let keep = lemmas[i] == lemmas[j]
                || config.synonym_pairs.contains(&lemmas[i], &lemmas[j])
                || (config.oracle_keep_positives && label == PairLabel::Coreferent);
            if keep {
                out.push(MentionPair {
                    a: x.mention_id.clone(),
                    b: y.mention_id.clone(),
                    label,
                    same_doc: x.doc_id == y.doc_id,
                    same_topic: x.topic_id == y.topic_id,
                });
            }
        }
    }
    out
}

pub fn write_pairs<W: Write>(mut w: W, pairs: &[MentionPair]) -> std::io::Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<MentionPair>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: MentionPair =
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if p.a >= p.b {
            return Err(Error::parse(i + 1, "pair not in canonical order (a < b)"));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<MentionPair>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pairs(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mention(id: &str, doc: &str, topic: &str, lemma: &str, cluster: &str) -> Mention {
        Mention {
            mention_id: id.into(),
            doc_id: doc.into(),
            topic_id: topic.into(),
            subtopic_id: None,
            sentence: format!("they {lemma} it"),
            trigger_text: lemma.into(),
            trigger_lemma: lemma.into(),
            token_span: (1, 1),
            gold_cluster: Some(cluster.into()),
        }
    }

    fn corpus(ms: Vec<Mention>) -> Corpus {
        Corpus::new("t", Split::Test, ms).unwrap()
    }

    #[test]
    fn loads_three_mentions() {
        let text = [
            r#"{"mention_id":"m1","doc_id":"d1","topic_id":"t1","subtopic_id":null,"sentence":"a quake hit","trigger_text":"quake","trigger_lemma":"quake","token_span":[1,1],"gold_cluster":"c1"}"#,
            r#"{"mention_id":"m2","doc_id":"d1","topic_id":"t1","subtopic_id":null,"sentence":"the quake","trigger_text":"quake","trigger_lemma":"quake","token_span":[1,1],"gold_cluster":"c1"}"#,
            r#"{"mention_id":"m3","doc_id":"d2","topic_id":"t1","subtopic_id":"s","sentence":"it shook","trigger_text":"shook","trigger_lemma":"shake","token_span":[1,1],"gold_cluster":"c2"}"#,
        ]
        .join("\n");
        let c = read_corpus(text.as_bytes(), "x", Split::Test).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.documents().len(), 2);
        assert_eq!(c.topics().len(), 1);
    }

    #[test]
    fn duplicate_id_rejected() {
        let line = r#"{"mention_id":"m1","doc_id":"d1","topic_id":"t1","sentence":"a b","trigger_text":"a","trigger_lemma":"a","token_span":[0,0],"gold_cluster":"c"}"#;
        let text = format!("{line}\n{line}\n");
        let err = read_corpus(text.as_bytes(), "x", Split::Test).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "m1"));
    }

    #[test]
    fn parse_error_reports_line() {
        let good = r#"{"mention_id":"m1","doc_id":"d1","topic_id":"t1","sentence":"a b","trigger_text":"a","trigger_lemma":"a","token_span":[0,0],"gold_cluster":"c"}"#;
        let text = format!("{good}\n{{not json\n");
        match read_corpus(text.as_bytes(), "x", Split::Test).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn span_out_of_range_rejected() {
        let line = r#"{"mention_id":"m1","doc_id":"d1","topic_id":"t1","sentence":"a b","trigger_text":"a","trigger_lemma":"a","token_span":[1,2],"gold_cluster":"c"}"#;
        assert!(read_corpus(line.as_bytes(), "x", Split::Test).is_err());
    }

    #[test]
    fn doc_under_two_topics_rejected() {
        let ms = vec![
            mention("m1", "d1", "t1", "kill", "c1"),
            mention("m2", "d1", "t2", "kill", "c1"),
        ];
        assert!(Corpus::new("t", Split::Test, ms).is_err());
    }

    #[test]
    fn exact_lemma_only() {
        let c = corpus(vec![
            mention("m1", "d1", "t1", "kill", "c1"),
            mention("m2", "d2", "t1", "kill", "c1"),
            mention("m3", "d3", "t1", "buy", "c2"),
        ]);
        let pairs = generate_pairs(&c, &PruningConfig::default());
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].a.as_str(), pairs[0].b.as_str()), ("m1", "m2"));
        assert_eq!(pairs[0].label, PairLabel::Coreferent);
    }

    #[test]
    fn synonyms_admit_pairs() {
        let c = corpus(vec![
            mention("m1", "d1", "t1", "kill", "c1"),
            mention("m2", "d2", "t1", "kill", "c1"),
            mention("m3", "d3", "t1", "buy", "c2"),
        ]);
        let cfg = PruningConfig {
            synonym_pairs: [("kill", "buy")].into_iter().collect(),
            ..PruningConfig::default()
        };
        assert_eq!(generate_pairs(&c, &cfg).len(), 3);
    }

    #[test]
    fn oracle_keeps_gold_positive() {
        let c = corpus(vec![
            mention("m1", "d1", "t1", "shoot", "c1"),
            mention("m2", "d2", "t1", "murder", "c1"),
        ]);
        let off = generate_pairs(&c, &PruningConfig::default());
        assert!(off.is_empty());
        let cfg = PruningConfig {
            oracle_keep_positives: true,
            ..PruningConfig::default()
        };
        let on = generate_pairs(&c, &cfg);
        assert_eq!(on.len(), 1);
        assert_eq!(on[0].label, PairLabel::Coreferent);
    }

    #[test]
    fn lemmas_compare_case_and_nfc_insensitive() {
        // "café" precomposed vs decomposed, different case
        let c = corpus(vec![
            mention("m1", "d1", "t1", "Caf\u{e9}", "c1"),
            mention("m2", "d2", "t1", "cafe\u{301}", "c2"),
        ]);
        assert_eq!(generate_pairs(&c, &PruningConfig::default()).len(), 1);
    }

    #[test]
    fn cross_topic_pairs_need_flag() {
        let c = corpus(vec![
            mention("m1", "d1", "t1", "kill", "c1"),
            mention("m2", "d2", "t2", "kill", "c2"),
        ]);
        assert!(generate_pairs(&c, &PruningConfig::default()).is_empty());
        let cfg = PruningConfig {
            within_topic_only: false,
            ..PruningConfig::default()
        };
        let pairs = generate_pairs(&c, &cfg);
        assert_eq!(pairs.len(), 1);
        assert!(!pairs[0].same_topic);
    }

    #[test]
    fn synonym_file_parsing() {
        let s = read_synonyms("kill\tmurder\n\n# c\nbuy\tacquire\n".as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.contains("murder", "kill"));
        assert!(read_synonyms("kill murder\n".as_bytes()).is_err());
    }

    #[test]
    fn pair_key_is_canonical() {
        assert_eq!(PairKey::new("b", "a"), PairKey::new("a", "b"));
        let m1 = mention("z", "d1", "t1", "x", "c");
        let m2 = mention("a", "d1", "t1", "x", "c");
        let p = MentionPair::new(&m1, &m2, PairLabel::Coreferent).unwrap();
        assert_eq!(p.a, "a");
        assert!(p.same_doc && p.same_topic);
        assert!(MentionPair::new(&m1, &m1, PairLabel::Unknown).is_err());
    }
}
