//! Hypernym taxonomy with Wu-Palmer similarity.
//!
//! Depth is the number of nodes on the shortest root-to-node path, so roots
//! have depth 1. In multi-parent graphs the shortest path wins.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::normalize_lemma;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct SynsetLine {
    synset: String,
    #[serde(default)]
    parents: Vec<String>,
    #[serde(default)]
    lemmas: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct Taxonomy {
    parents: BTreeMap<String, BTreeSet<String>>,
    lemma_index: HashMap<String, BTreeSet<String>>,
    roots: BTreeSet<String>,
    depths: HashMap<String, usize>,
}

/// Builder input: `(synset, parents, lemmas)`.
pub type SynsetEntry<'a> = (&'a str, &'a [&'a str], &'a [&'a str]);

impl Taxonomy {
    pub fn from_entries(entries: &[SynsetEntry<'_>]) -> Result<Self> {
        let lines = entries
            .iter()
            .map(|(s, p, l)| SynsetLine {
                synset: s.to_string(),
                parents: p.iter().map(|x| x.to_string()).collect(),
                lemmas: l.iter().map(|x| x.to_string()).collect(),
            })
            .collect();
        Self::build(lines)
    }

    fn build(lines: Vec<SynsetLine>) -> Result<Self> {
        let mut parents: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut lemma_index: HashMap<String, BTreeSet<String>> = HashMap::new();
        for line in lines {
            if line.synset.is_empty() {
                return Err(Error::Invalid("empty synset id".into()));
            }
            if parents.contains_key(&line.synset) {
                return Err(Error::DuplicateId(line.synset));
            }
            for lemma in &line.lemmas {
                lemma_index
                    .entry(normalize_lemma(lemma))
                    .or_default()
                    .insert(line.synset.clone());
            }
            parents.insert(line.synset, line.parents.into_iter().collect());
        }
        for (s, ps) in &parents {
            if let Some(p) = ps.iter().find(|p| !parents.contains_key(*p)) {
                return Err(Error::Invalid(format!(
                    "synset `{s}` lists unknown parent `{p}`"
                )));
            }
        }

        let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (s, ps) in &parents {
            for p in ps {
                children.entry(p.as_str()).or_default().push(s.as_str());
            }
        }

        // Kahn's algorithm: anything left unvisited sits on a cycle.
        let mut indegree: HashMap<&str, usize> =
            parents.iter().map(|(s, ps)| (s.as_str(), ps.len())).collect();
        let mut queue: VecDeque<&str> = parents
            .iter()
            .filter(|(_, ps)| ps.is_empty())
            .map(|(s, _)| s.as_str())
            .collect();
        let roots: BTreeSet<String> = queue.iter().map(|s| s.to_string()).collect();
        let mut visited = 0usize;
        while let Some(s) = queue.pop_front() {
            visited += 1;
            for &c in children.get(s).map(Vec::as_slice).unwrap_or(&[]) {
                let d = indegree.get_mut(c).expect("child indexed");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(c);
                }
            }
        }
        if visited != parents.len() {
            let stuck = indegree
                .iter()
                .filter(|(_, &d)| d > 0)
                .map(|(s, _)| *s)
                .min()
                .unwrap_or_default();
            return Err(Error::Cycle(stuck.to_string()));
        }

        let mut depths: HashMap<String, usize> = HashMap::with_capacity(parents.len());
        let mut bfs: VecDeque<&str> = VecDeque::new();
        for r in &roots {
            depths.insert(r.clone(), 1);
            bfs.push_back(r.as_str());
        }
        while let Some(s) = bfs.pop_front() {
            let d = depths[s];
            for &c in children.get(s).map(Vec::as_slice).unwrap_or(&[]) {
                if !depths.contains_key(c) {
                    depths.insert(c.to_string(), d + 1);
                    bfs.push_back(c);
                }
            }
        }

        Ok(Self {
            parents,
            lemma_index,
            roots,
            depths,
        })
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn contains(&self, synset: &str) -> bool {
        self.parents.contains_key(synset)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.parents.keys().map(String::as_str)
    }

    pub fn roots(&self) -> &BTreeSet<String> {
        &self.roots
    }

    pub fn parents_of(&self, synset: &str) -> Result<&BTreeSet<String>> {
        self.parents
            .get(synset)
            .ok_or_else(|| Error::UnknownId(synset.to_string()))
    }

    pub fn synsets_for(&self, lemma: &str) -> Option<&BTreeSet<String>> {
        self.lemma_index.get(&normalize_lemma(lemma))
    }

    pub fn depth(&self, synset: &str) -> Result<usize> {
        self.depths
            .get(synset)
            .copied()
            .ok_or_else(|| Error::UnknownId(synset.to_string()))
    }

    /// Reflexive-transitive hypernym closure.
    pub fn ancestors(&self, synset: &str) -> Result<BTreeSet<&str>> {
        let (start, _) = self
            .parents
            .get_key_value(synset)
            .ok_or_else(|| Error::UnknownId(synset.to_string()))?;
        let mut seen = BTreeSet::new();
        let mut stack = vec![start.as_str()];
        while let Some(s) = stack.pop() {
            if seen.insert(s) {
                stack.extend(self.parents[s].iter().map(String::as_str));
            }
        }
        Ok(seen)
    }

    /// Deepest common ancestor; ties go to the lexicographically smallest id.
    ///
    /// With shortest-path depths a shortcut edge can leave an ancestor deeper
    /// than its descendant, so candidates deeper than either input are skipped.
    pub fn lcs(&self, s1: &str, s2: &str) -> Result<Option<&str>> {
        let a1 = self.ancestors(s1)?;
        let a2 = self.ancestors(s2)?;
        let cap = self.depths[s1].min(self.depths[s2]);
        // BTreeSet iterates in id order, so the first maximum is the smallest id.
        let mut best: Option<(&str, usize)> = None;
        for s in a1.intersection(&a2) {
            let d = self.depths[*s];
            if d <= cap && best.is_none_or(|(_, bd)| d > bd) {
                best = Some((s, d));
            }
        }
        Ok(best.map(|(s, _)| s))
    }

    /// Similarity of two synsets, `None` without a common ancestor.
    pub fn synset_similarity(&self, s1: &str, s2: &str) -> Result<Option<f64>> {
        let Some(l) = self.lcs(s1, s2)? else {
            return Ok(None);
        };
        let num = 2.0 * self.depths[l] as f64;
        let den = (self.depth(s1)? + self.depth(s2)?) as f64;
        Ok(Some(num / den))
    }

    /// Wu-Palmer similarity of two lemmas, maximized over their senses.
    ///
    /// Identical normalized lemmas score 1.0; unindexed lemmas and disjoint
    /// hierarchies score 0.0, so the function is total.
    pub fn wu_palmer(&self, lemma_a: &str, lemma_b: &str) -> f64 {
        let (na, nb) = (normalize_lemma(lemma_a), normalize_lemma(lemma_b));
        if na == nb {
            return 1.0;
        }
        let (Some(sa), Some(sb)) = (self.lemma_index.get(&na), self.lemma_index.get(&nb)) else {
            return 0.0;
        };
        let mut best = 0.0_f64;
        for x in sa {
            for y in sb {
                if let Ok(Some(v)) = self.synset_similarity(x, y) {
                    best = best.max(v);
                }
            }
        }
        best
    }
}

pub fn read_taxonomy<R: BufRead>(reader: R) -> Result<Taxonomy> {
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: SynsetLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        lines.push(entry);
    }
    Taxonomy::build(lines)
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<Taxonomy> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_taxonomy(BufReader::new(file))
}

/// Writes taxonomy JSONL, one synset per line in id order.
pub fn write_taxonomy<W: std::io::Write>(mut w: W, t: &Taxonomy) -> std::io::Result<()> {
    let mut lemmas_by_synset: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (lemma, synsets) in &t.lemma_index {
        for s in synsets {
            lemmas_by_synset.entry(s).or_default().insert(lemma);
        }
    }
    for (s, ps) in &t.parents {
        let line = SynsetLine {
            synset: s.clone(),
            parents: ps.iter().cloned().collect(),
            lemmas: lemmas_by_synset
                .get(s.as_str())
                .map(|ls| ls.iter().map(|l| l.to_string()).collect())
                .unwrap_or_default(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn animals() -> Taxonomy {
        Taxonomy::from_entries(&[
            ("root", &[], &[]),
            ("animal", &["root"], &["animal"]),
            ("dog", &["animal"], &["dog"]),
            ("cat", &["animal"], &["cat"]),
        ])
        .unwrap()
    }

    #[test]
    fn chain_depths() {
        let t = Taxonomy::from_entries(&[
            ("root", &[], &[]),
            ("animal", &["root"], &[]),
            ("dog", &["animal"], &[]),
        ])
        .unwrap();
        assert_eq!(t.roots().iter().collect::<Vec<_>>(), vec!["root"]);
        assert_eq!(t.depth("root").unwrap(), 1);
        assert_eq!(t.depth("dog").unwrap(), 3);
        assert!(t.depth("nope").is_err());
    }

    #[test]
    fn diamond_uses_shortest_path() {
        let t = Taxonomy::from_entries(&[
            ("root", &[], &[]),
            ("a", &["root"], &[]),
            ("b", &["root"], &[]),
            ("x", &["a"], &[]),
            ("c", &["x", "b"], &[]),
        ])
        .unwrap();
        // root→b→c has 3 nodes, root→a→x→c has 4
        assert_eq!(t.depth("c").unwrap(), 3);
    }

    #[test]
    fn self_parent_is_cycle() {
        let err = Taxonomy::from_entries(&[("root", &[], &[]), ("dog", &["dog"], &[])]).unwrap_err();
        assert!(matches!(err, Error::Cycle(s) if s == "dog"));
    }

    #[test]
    fn longer_cycle_detected() {
        let err =
            Taxonomy::from_entries(&[("a", &["c"], &[]), ("b", &["a"], &[]), ("c", &["b"], &[])])
                .unwrap_err();
        assert!(matches!(err, Error::Cycle(_)));
    }

    #[test]
    fn dangling_parent_rejected() {
        assert!(Taxonomy::from_entries(&[("dog", &["animal"], &[])]).is_err());
    }

    #[test]
    fn empty_file_gives_empty_taxonomy() {
        let t = read_taxonomy("".as_bytes()).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.wu_palmer("dog", "cat"), 0.0);
        assert_eq!(t.wu_palmer("dog", "dog"), 1.0);
    }

    #[test]
    fn lcs_cases() {
        let t = animals();
        assert_eq!(t.lcs("dog", "dog").unwrap(), Some("dog"));
        assert_eq!(t.lcs("dog", "cat").unwrap(), Some("animal"));
        let split = Taxonomy::from_entries(&[("r1", &[], &[]), ("r2", &[], &[])]).unwrap();
        assert_eq!(split.lcs("r1", "r2").unwrap(), None);
    }

    #[test]
    fn lcs_tie_breaks_lexicographically() {
        let t = Taxonomy::from_entries(&[
            ("root", &[], &[]),
            ("p", &["root"], &[]),
            ("q", &["root"], &[]),
            ("x", &["p", "q"], &[]),
            ("y", &["p", "q"], &[]),
        ])
        .unwrap();
        assert_eq!(t.lcs("x", "y").unwrap(), Some("p"));
    }

    #[test]
    fn wu_palmer_values() {
        let t = animals();
        assert_eq!(t.wu_palmer("quake", "quake"), 1.0);
        assert!((t.wu_palmer("dog", "cat") - 2.0 * 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(t.wu_palmer("dog", "xylophone"), 0.0);
        assert!((t.wu_palmer("Dog", "animal") - 2.0 * 2.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn wu_palmer_takes_best_sense() {
        let t = Taxonomy::from_entries(&[
            ("root", &[], &[]),
            ("event", &["root"], &[]),
            ("fire.v.shoot", &["event"], &["fire"]),
            ("fire.n.flame", &["root"], &["fire"]),
            ("shoot.v", &["event"], &["shoot"]),
        ])
        .unwrap();
        assert!((t.wu_palmer("fire", "shoot") - 2.0 * 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn round_trips_through_jsonl() {
        let t = animals();
        let mut buf = Vec::new();
        write_taxonomy(&mut buf, &t).unwrap();
        let back = read_taxonomy(buf.as_slice()).unwrap();
        assert_eq!(back.len(), t.len());
        assert_eq!(back.wu_palmer("dog", "cat"), t.wu_palmer("dog", "cat"));
    }
}
