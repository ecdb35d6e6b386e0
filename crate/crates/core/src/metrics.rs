//! Coreference evaluation: MUC, B³, CEAF_e and their CoNLL average.
//!
//! Each metric first produces raw numerator/denominator counts so that
//! corpus-level scores can be micro-averaged by summing counts across
//! topics before taking ratios.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::clusterer::ClusterSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    #[serde(rename = "r")]
    pub recall: f64,
    #[serde(rename = "p")]
    pub precision: f64,
    pub f1: f64,
}

impl MetricResult {
    pub fn new(recall: f64, precision: f64) -> Self {
        let f1 = if recall + precision > 0.0 {
            2.0 * recall * precision / (recall + precision)
        } else {
            0.0
        };
        Self {
            recall,
            precision,
            f1,
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub recall_num: f64,
    pub recall_den: f64,
    pub precision_num: f64,
    pub precision_den: f64,
}

impl MetricCounts {
    pub fn result(&self) -> MetricResult {
        MetricResult::new(
            ratio(self.recall_num, self.recall_den),
            ratio(self.precision_num, self.precision_den),
        )
    }
}

impl std::ops::AddAssign for MetricCounts {
    fn add_assign(&mut self, o: Self) {
        self.recall_num += o.recall_num;
        self.recall_den += o.recall_den;
        self.precision_num += o.precision_num;
        self.precision_den += o.precision_den;
    }
}

fn check_coverage(key: &ClusterSet, response: &ClusterSet) -> Result<()> {
    let (k, r) = (key.covers(), response.covers());
    if k != r {
        let missing = k.symmetric_difference(&r).next().copied().unwrap_or_default();
        return Err(Error::Invalid(format!(
            "key and response cover different mentions (e.g. `{missing}`)"
        )));
    }
    Ok(())
}

/// Σ_k (|k| − p(k)) and Σ_k (|k| − 1), with p(k) the number of parts the other partition cuts k into.
fn muc_side(gold: &ClusterSet, other: &ClusterSet) -> (f64, f64) {
    let membership = other.membership();
    let mut num = 0usize;
    let mut den = 0usize;
    for c in gold.clusters() {
        let mut parts = BTreeSet::new();
        let mut unmatched = 0usize;
        for m in c {
            match membership.get(m.as_str()) {
                Some(&i) => {
                    parts.insert(i);
                }
                None => unmatched += 1,
            }
        }
        num += c.len() - (parts.len() + unmatched);
        den += c.len() - 1;
    }
    (num as f64, den as f64)
}

pub fn muc_counts(key: &ClusterSet, response: &ClusterSet) -> Result<MetricCounts> {
    check_coverage(key, response)?;
    let (rn, rd) = muc_side(key, response);
    let (pn, pd) = muc_side(response, key);
    Ok(MetricCounts {
        recall_num: rn,
        recall_den: rd,
        precision_num: pn,
        precision_den: pd,
    })
}

pub fn muc(key: &ClusterSet, response: &ClusterSet) -> Result<MetricResult> {
    Ok(muc_counts(key, response)?.result())
}

/// Sizes of all non-empty key∩response intersections, keyed by (key idx, response idx).
fn intersections(key: &ClusterSet, response: &ClusterSet) -> BTreeMap<(usize, usize), usize> {
    let rmem = response.membership();
    let mut out = BTreeMap::new();
    for (ki, c) in key.clusters().iter().enumerate() {
        for m in c {
            if let Some(&ri) = rmem.get(m.as_str()) {
                *out.entry((ki, ri)).or_insert(0) += 1;
            }
        }
    }
    out
}

pub fn b_cubed_counts(key: &ClusterSet, response: &ClusterSet) -> Result<MetricCounts> {
    check_coverage(key, response)?;
    let n = key.mention_count() as f64;
    let mut r = 0.0;
    let mut p = 0.0;
    for ((ki, ri), overlap) in intersections(key, response) {
        let overlap = overlap as f64;
        // each of the `overlap` mentions contributes overlap / |cluster|
        r += overlap * overlap / key.clusters()[ki].len() as f64;
        p += overlap * overlap / response.clusters()[ri].len() as f64;
    }
    Ok(MetricCounts {
        recall_num: r,
        recall_den: n,
        precision_num: p,
        precision_den: n,
    })
}

pub fn b_cubed(key: &ClusterSet, response: &ClusterSet) -> Result<MetricResult> {
    Ok(b_cubed_counts(key, response)?.result())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(row, column)` pairs, sorted by row.
    pub matching: Vec<(usize, usize)>,
    pub total_similarity: f64,
}

/// Maximum-weight one-to-one matching of `min(rows, cols)` pairs.
///
/// Hungarian algorithm with row/column potentials on the cost `-similarity`,
/// after padding the shorter side with zero-similarity dummies. O(n³).
pub fn kuhn_munkres(similarity: &[Vec<f64>]) -> Result<Assignment> {
    let rows = similarity.len();
    let cols = similarity.first().map_or(0, Vec::len);
    for r in similarity {
        if r.len() != cols {
            return Err(Error::DimMismatch {
                expected: cols,
                actual: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("similarity matrix".into()));
        }
    }
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            matching: Vec::new(),
            total_similarity: 0.0,
        });
    }
    let n = rows.max(cols);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -similarity[i][j]
        } else {
            0.0
        }
    };
    // 1-based potentials; column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut matching: Vec<(usize, usize)> = (1..=n)
        .filter_map(|j| {
            let i = owner[j];
            (i >= 1 && i - 1 < rows && j - 1 < cols).then(|| (i - 1, j - 1))
        })
        .collect();
    matching.sort_unstable();
    let total_similarity = matching.iter().map(|&(i, j)| similarity[i][j]).sum();
    Ok(Assignment {
        matching,
        total_similarity,
    })
}

/// `φ4(K, R) = 2|K ∩ R| / (|K| + |R|)`.
pub fn phi4(key_size: usize, response_size: usize, overlap: usize) -> f64 {
    2.0 * overlap as f64 / (key_size + response_size) as f64
}

pub fn ceaf_e_counts(key: &ClusterSet, response: &ClusterSet) -> Result<MetricCounts> {
    check_coverage(key, response)?;
    let overlaps = intersections(key, response);

    // Clusters that share no mention have φ4 = 0, so the alignment splits
    // into independent blocks of the key/response intersection graph.
    let nk = key.len();
    let mut parent: Vec<usize> = (0..nk + response.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(ki, ri) in overlaps.keys() {
        let (a, b) = (find(&mut parent, ki), find(&mut parent, nk + ri));
        if a != b {
            parent[a] = b;
        }
    }
    let mut blocks: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for ki in 0..nk {
        let root = find(&mut parent, ki);
        blocks.entry(root).or_default().0.push(ki);
    }
    for ri in 0..response.len() {
        let root = find(&mut parent, nk + ri);
        blocks.entry(root).or_default().1.push(ri);
    }

    let mut total = 0.0;
    for (ks, rs) in blocks.values() {
        if ks.is_empty() || rs.is_empty() {
            continue;
        }
        let sim: Vec<Vec<f64>> = ks
            .iter()
            .map(|&ki| {
                rs.iter()
                    .map(|&ri| {
                        let ov = overlaps.get(&(ki, ri)).copied().unwrap_or(0);
                        phi4(key.clusters()[ki].len(), response.clusters()[ri].len(), ov)
                    })
                    .collect()
            })
            .collect();
        total += kuhn_munkres(&sim)?.total_similarity;
    }
    Ok(MetricCounts {
        recall_num: total,
        recall_den: key.len() as f64,
        precision_num: total,
        precision_den: response.len() as f64,
    })
}

pub fn ceaf_e(key: &ClusterSet, response: &ClusterSet) -> Result<MetricResult> {
    Ok(ceaf_e_counts(key, response)?.result())
}

pub fn conll_f1(muc: &MetricResult, b3: &MetricResult, ceafe: &MetricResult) -> f64 {
    (muc.f1 + b3.f1 + ceafe.f1) / 3.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Sum counts over groups, then take ratios.
    #[default]
    Micro,
    /// Average per-group precision and recall.
    Macro,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Aggregation::Micro),
            "macro" => Ok(Aggregation::Macro),
            other => Err(Error::Invalid(format!("unknown aggregation `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorefEvaluation {
    pub muc: MetricResult,
    pub b3: MetricResult,
    pub ceaf_e: MetricResult,
    pub conll_f1: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct CountTriple {
    muc: MetricCounts,
    b3: MetricCounts,
    ceaf_e: MetricCounts,
}

fn count_all(key: &ClusterSet, response: &ClusterSet) -> Result<CountTriple> {
    Ok(CountTriple {
        muc: muc_counts(key, response)?,
        b3: b_cubed_counts(key, response)?,
        ceaf_e: ceaf_e_counts(key, response)?,
    })
}

fn from_results(muc: MetricResult, b3: MetricResult, ceaf_e: MetricResult) -> CorefEvaluation {
    CorefEvaluation {
        conll_f1: conll_f1(&muc, &b3, &ceaf_e),
        muc,
        b3,
        ceaf_e,
    }
}

pub fn evaluate(key: &ClusterSet, response: &ClusterSet) -> Result<CorefEvaluation> {
    let c = count_all(key, response)?;
    Ok(from_results(c.muc.result(), c.b3.result(), c.ceaf_e.result()))
}

/// Evaluates per group (e.g. topic) and aggregates. A cluster that spans
/// groups is split along group boundaries.
pub fn evaluate_grouped<F>(
    key: &ClusterSet,
    response: &ClusterSet,
    group_of: F,
    aggregation: Aggregation,
) -> Result<CorefEvaluation>
where
    F: Fn(&str) -> Result<String>,
{
    check_coverage(key, response)?;
    let mut groups: HashMap<String, ()> = HashMap::new();
    let mut mention_group: HashMap<&str, String> = HashMap::new();
    for m in key.covers() {
        let g = group_of(m)?;
        groups.insert(g.clone(), ());
        mention_group.insert(m, g);
    }
    let mut names: Vec<String> = groups.into_keys().collect();
    names.sort();
    let mut per_group = Vec::with_capacity(names.len());
    for g in &names {
        let in_group = |m: &str| mention_group.get(m) == Some(g);
        let k = split_by_group(key, &mention_group).restrict(in_group);
        let r = split_by_group(response, &mention_group).restrict(in_group);
        per_group.push(count_all(&k, &r)?);
    }
    match aggregation {
        Aggregation::Micro => {
            let mut sum = CountTriple::default();
            for c in per_group {
                sum.muc += c.muc;
                sum.b3 += c.b3;
                sum.ceaf_e += c.ceaf_e;
            }
            Ok(from_results(sum.muc.result(), sum.b3.result(), sum.ceaf_e.result()))
        }
        Aggregation::Macro => {
            let n = per_group.len().max(1) as f64;
            let mean = |f: &dyn Fn(&CountTriple) -> MetricResult| {
                let (r, p) = per_group.iter().fold((0.0, 0.0), |(r, p), c| {
                    let m = f(c);
                    (r + m.recall, p + m.precision)
                });
                MetricResult::new(r / n, p / n)
            };
            Ok(from_results(
                mean(&|c| c.muc.result()),
                mean(&|c| c.b3.result()),
                mean(&|c| c.ceaf_e.result()),
            ))
        }
    }
}

fn split_by_group(cs: &ClusterSet, group: &HashMap<&str, String>) -> ClusterSet {
    let mut out = Vec::new();
    for c in cs.clusters() {
        let mut parts: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
        for m in c {
            let g = group.get(m.as_str()).map(String::as_str).unwrap_or("");
            parts.entry(g).or_default().insert(m.clone());
        }
        out.extend(parts.into_values());
    }
    ClusterSet::new(out).expect("splitting a partition keeps it a partition")
}
