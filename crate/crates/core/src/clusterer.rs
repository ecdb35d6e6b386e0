//! Threshold + transitive-closure clustering of scored pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::scorer::PairScore;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// A partition of mention ids, clusters ordered by their smallest member.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ClusterSet {
    clusters: Vec<BTreeSet<String>>,
}

impl ClusterSet {
    /// Validates disjointness and drops nothing: empty clusters are an error.
    pub fn new(clusters: Vec<BTreeSet<String>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &clusters {
            if c.is_empty() {
                return Err(Error::Invalid("empty cluster".into()));
            }
            for m in c {
                if !seen.insert(m.as_str()) {
                    return Err(Error::DuplicateId(m.clone()));
                }
            }
        }
        let mut clusters = clusters;
        clusters.sort_by(|x, y| x.iter().next().cmp(&y.iter().next()));
        Ok(Self { clusters })
    }

    /// Groups mentions by an arbitrary cluster key.
    pub fn from_assignments<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut by_key: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for (mention, key) in pairs {
            if !seen.insert(mention) {
                return Err(Error::DuplicateId(mention.to_string()));
            }
            by_key.entry(key).or_default().insert(mention.to_string());
        }
        Self::new(by_key.into_values().collect())
    }

    /// Gold partition of a corpus; unannotated mentions become singletons.
    pub fn gold(corpus: &Corpus) -> Result<Self> {
        let mut clusters: Vec<BTreeSet<String>> = corpus.gold_clusters().into_values().collect();
        for m in corpus.mentions() {
            if m.gold_cluster.is_none() {
                clusters.push(BTreeSet::from([m.mention_id.clone()]));
            }
        }
        Self::new(clusters)
    }

    pub fn clusters(&self) -> &[BTreeSet<String>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn covers(&self) -> BTreeSet<&str> {
        self.clusters
            .iter()
            .flat_map(|c| c.iter().map(String::as_str))
            .collect()
    }

    pub fn mention_count(&self) -> usize {
        self.clusters.iter().map(BTreeSet::len).sum()
    }

    /// Mention → cluster index.
    pub fn membership(&self) -> HashMap<&str, usize> {
        let mut out = HashMap::with_capacity(self.mention_count());
        for (i, c) in self.clusters.iter().enumerate() {
            for m in c {
                out.insert(m.as_str(), i);
            }
        }
        out
    }

    /// Restricts to mentions satisfying `keep`, dropping clusters that empty out.
    pub fn restrict<F: Fn(&str) -> bool>(&self, keep: F) -> ClusterSet {
        let clusters = self
            .clusters
            .iter()
            .map(|c| c.iter().filter(|m| keep(m)).cloned().collect::<BTreeSet<_>>())
            .filter(|c| !c.is_empty())
            .collect();
        ClusterSet { clusters }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            mention_id: &'a str,
            cluster_id: String,
        }
        for (i, c) in self.clusters.iter().enumerate() {
            for m in c {
                serde_json::to_writer(
                    &mut w,
                    &Line {
                        mention_id: m,
                        cluster_id: i.to_string(),
                    },
                )?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    /// Reads `{"mention_id", "cluster_id"}` lines. Corpus lines carrying
    /// `gold_cluster` are accepted too, so a corpus file can serve as a key.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            mention_id: String,
            #[serde(default)]
            cluster_id: Option<String>,
            #[serde(default)]
            gold_cluster: Option<String>,
        }
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let l: Line =
                serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            let key = match (l.cluster_id, l.gold_cluster) {
                (Some(c), _) => c,
                (None, Some(g)) => format!("gold:{g}"),
                (None, None) => format!("singleton:{}", l.mention_id),
            };
            rows.push((l.mention_id, key));
        }
        Self::from_assignments(rows.iter().map(|(m, k)| (m.as_str(), k.as_str())))
    }
}

/// Connected components of the graph with an edge wherever `s_mean ≥ threshold`.
pub fn cluster(mentions: &BTreeSet<String>, scores: &[PairScore], threshold: f64) -> Result<ClusterSet> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Invalid(format!("threshold {threshold} outside [0, 1]")));
    }
    let ids: Vec<&str> = mentions.iter().map(String::as_str).collect();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, m)| (*m, i)).collect();
    let mut uf = UnionFind::new(ids.len());
    for s in scores {
        let a = *index
            .get(s.a.as_str())
            .ok_or_else(|| Error::UnknownId(s.a.clone()))?;
        let b = *index
            .get(s.b.as_str())
            .ok_or_else(|| Error::UnknownId(s.b.clone()))?;
        if s.s_mean >= threshold {
            uf.union(a, b);
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (i, m) in ids.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().insert(m.to_string());
    }
    ClusterSet::new(groups.into_values().collect())
}

/// Emits a CoNLL-2012-style file: one document holding one sentence block per
/// mention (ordered by doc then mention id) whose coref column brackets the
/// trigger span with the mention's cluster number.
pub fn write_conll<W: Write>(mut w: W, corpus: &Corpus, clusters: &ClusterSet) -> Result<()> {
    let membership = clusters.membership();
    let mut mentions: Vec<_> = corpus.mentions().iter().collect();
    mentions.sort_by(|x, y| (&x.doc_id, &x.mention_id).cmp(&(&y.doc_id, &y.mention_id)));
    let io = |e: std::io::Error| Error::io("<conll>", e);
    writeln!(w, "#begin document ({}); part 000", corpus.name()).map_err(io)?;
    for m in mentions {
        let cid = *membership
            .get(m.mention_id.as_str())
            .ok_or_else(|| Error::UnknownId(m.mention_id.clone()))?;
        let (start, end) = m.token_span;
        for (t, token) in m.sentence.split_whitespace().enumerate() {
            let tag = match (t == start, t == end) {
                (true, true) => format!("({cid})"),
                (true, false) => format!("({cid}"),
                (false, true) => format!("{cid})"),
                (false, false) => "-".to_string(),
            };
            writeln!(w, "{}\t0\t{}\t{}\t{}", m.doc_id, t, token, tag).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    writeln!(w, "#end document").map_err(io)?;
    Ok(())
}

/// Parses the coref column of a CoNLL file back into clusters. Mentions are
/// identified as `doc#block:start-end`, which is stable across key and
/// response files emitted for the same corpus.
pub fn read_conll<R: BufRead>(reader: R) -> Result<ClusterSet> {
    let mut assignments: Vec<(String, String)> = Vec::new();
    let mut open: HashMap<String, Vec<usize>> = HashMap::new();
    let mut block = 0usize;
    let mut in_block = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if line.starts_with('#') {
            continue;
        }
        if line.trim().is_empty() {
            if in_block {
                if let Some((c, _)) = open.iter().find(|(_, v)| !v.is_empty()) {
                    return Err(Error::parse(i + 1, format!("unclosed mention of cluster {c}")));
                }
                block += 1;
                in_block = false;
            }
            continue;
        }
        in_block = true;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < 4 {
            return Err(Error::parse(i + 1, "expected at least 4 columns"));
        }
        let doc = cols[0];
        let token: usize = cols[2]
            .parse()
            .map_err(|_| Error::parse(i + 1, "token index is not an integer"))?;
        let coref = cols[cols.len() - 1];
        if coref == "-" {
            continue;
        }
        for part in coref.split('|') {
            let (opens, rest) = match part.strip_prefix('(') {
                Some(r) => (true, r),
                None => (false, part),
            };
            let (closes, id) = match rest.strip_suffix(')') {
                Some(r) => (true, r),
                None => (false, rest),
            };
            if id.is_empty() || id.parse::<u64>().is_err() {
                return Err(Error::parse(i + 1, format!("bad coref tag `{part}`")));
            }
            let start = if opens {
                token
            } else {
                open.get_mut(id)
                    .and_then(|v| v.pop())
                    .ok_or_else(|| Error::parse(i + 1, format!("close without open for {id}")))?
            };
            if closes {
                assignments.push((format!("{doc}#{block}:{start}-{token}"), id.to_string()));
            } else {
                open.entry(id.to_string()).or_default().push(start);
            }
        }
    }
    if let Some((c, _)) = open.iter().find(|(_, v)| !v.is_empty()) {
        return Err(Error::Invalid(format!("unclosed mention of cluster {c}")));
    }
    ClusterSet::from_assignments(assignments.iter().map(|(m, k)| (m.as_str(), k.as_str())))
}
