//! Difficulty-routed model ensembles and hard-pair proportion reports.
//!
//! Routing uses categories computed from gold labels, so grid-search results
//! are an oracle-routing upper bound rather than a deployable system.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusterer::{cluster, ClusterSet};
use crate::corpus::{PairKey, PairLabel};
use crate::difficulty::{CategorizedPair, DifficultyCategory};
use crate::error::{Error, Result};
use crate::metrics::CorefEvaluation;
use crate::scorer::PairScore;

pub const ORACLE_NOTE: &str = "routing uses gold-derived difficulty categories: \
scores are an oracle-routing upper bound";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RoutingPolicy {
    pub easy_model: String,
    pub hard_pos_model: String,
    pub hard_neg_model: String,
}

impl RoutingPolicy {
    pub fn new(easy: &str, hard_pos: &str, hard_neg: &str) -> Self {
        Self {
            easy_model: easy.into(),
            hard_pos_model: hard_pos.into(),
            hard_neg_model: hard_neg.into(),
        }
    }

    /// Every slot served by one model.
    pub fn single(model: &str) -> Self {
        Self::new(model, model, model)
    }

    pub fn model_for(&self, category: DifficultyCategory) -> &str {
        match category {
            DifficultyCategory::EasyPos | DifficultyCategory::EasyNeg => &self.easy_model,
            DifficultyCategory::HardPos => &self.hard_pos_model,
            DifficultyCategory::HardNeg => &self.hard_neg_model,
        }
    }

    fn id(&self) -> String {
        format!("{}+{}+{}", self.easy_model, self.hard_pos_model, self.hard_neg_model)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub model_id: String,
    pub scores: BTreeMap<PairKey, PairScore>,
}

const SCORE_HEADER: &str = "pair_a,pair_b,s_ab,s_ba,s_mean";

impl PredictionSet {
    /// Scores are keyed by canonical pair; `s_ab` is always the score with the
    /// canonical first mention read first.
    pub fn new(model_id: impl Into<String>, scores: Vec<PairScore>) -> Result<Self> {
        let model_id = model_id.into();
        let mut map = BTreeMap::new();
        for s in scores {
            let key = PairKey::new(&s.a, &s.b);
            let s = if key.a == s.a {
                s
            } else {
                PairScore::new(&key.a, &key.b, s.s_ba, s.s_ab)
            };
            if map.insert(key.clone(), s).is_some() {
                return Err(Error::DuplicateId(format!("pair {key} in model `{model_id}`")));
            }
        }
        Ok(Self {
            model_id,
            scores: map,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, key: &PairKey) -> Result<&PairScore> {
        self.scores.get(key).ok_or_else(|| {
            Error::MissingVector(format!("model `{}` has no score for pair {key}", self.model_id))
        })
    }

    pub fn pair_scores(&self) -> Vec<PairScore> {
        self.scores.values().cloned().collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{SCORE_HEADER}")?;
        for s in self.scores.values() {
            writeln!(w, "{},{},{},{},{}", s.a, s.b, s.s_ab, s.s_ba, s.s_mean)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(model_id: &str, reader: R) -> Result<Self> {
        let mut scores = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
            if line.trim().is_empty() || line == SCORE_HEADER {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::parse(i + 1, format!("expected 5 fields, got {}", f.len())));
            }
            let num = |s: &str| -> Result<f64> {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::parse(i + 1, format!("bad score `{s}`")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::parse(i + 1, format!("score {v} outside [0, 1]")));
                }
                Ok(v)
            };
            let s = PairScore::new(f[0], f[1], num(f[2])?, num(f[3])?);
            let stated = num(f[4])?;
            if (stated - s.s_mean).abs() > 1e-9 {
                return Err(Error::parse(
                    i + 1,
                    format!("s_mean {stated} is not the mean of s_ab and s_ba"),
                ));
            }
            scores.push(s);
        }
        Self::new(model_id, scores)
    }
}

/// Named prediction sets; a registry directory holds one `<model_id>.csv` each.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Registry {
    sets: BTreeMap<String, PredictionSet>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, set: PredictionSet) -> Result<()> {
        if self.sets.contains_key(&set.model_id) {
            return Err(Error::DuplicateId(format!("model `{}`", set.model_id)));
        }
        self.sets.insert(set.model_id.clone(), set);
        Ok(())
    }

    pub fn get(&self, model_id: &str) -> Result<&PredictionSet> {
        self.sets
            .get(model_id)
            .ok_or_else(|| Error::UnknownId(format!("model `{model_id}` is not registered")))
    }

    pub fn ids(&self) -> Vec<&str> {
        self.sets.keys().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        let mut reg = Self::new();
        for p in paths {
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Invalid(format!("bad registry file name {}", p.display())))?
                .to_string();
            let file = std::fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
            reg.insert(PredictionSet::read_csv(&id, BufReader::new(file))?)?;
        }
        if reg.is_empty() {
            return Err(Error::Invalid(format!("no score files in {}", dir.display())));
        }
        Ok(reg)
    }
}

fn category_map(pairs: &[CategorizedPair]) -> Result<BTreeMap<PairKey, DifficultyCategory>> {
    let mut map = BTreeMap::new();
    for p in pairs {
        if map.insert(p.pair.key(), p.category).is_some() {
            return Err(Error::DuplicateId(format!("categorized pair {}", p.pair.key())));
        }
    }
    Ok(map)
}

fn route(
    categories: &BTreeMap<PairKey, DifficultyCategory>,
    policy: &RoutingPolicy,
    registry: &Registry,
) -> Result<PredictionSet> {
    let slots = [
        registry.get(&policy.easy_model)?,
        registry.get(&policy.hard_pos_model)?,
        registry.get(&policy.hard_neg_model)?,
    ];
    let mut scores = BTreeMap::new();
    for (key, &cat) in categories {
        let set = match cat {
            DifficultyCategory::EasyPos | DifficultyCategory::EasyNeg => slots[0],
            DifficultyCategory::HardPos => slots[1],
            DifficultyCategory::HardNeg => slots[2],
        };
        scores.insert(key.clone(), set.get(key)?.clone());
    }
    Ok(PredictionSet {
        model_id: policy.id(),
        scores,
    })
}

/// Takes each pair's score from the model its category routes to.
pub fn route_and_merge(
    pairs: &[CategorizedPair],
    policy: &RoutingPolicy,
    registry: &Registry,
) -> Result<PredictionSet> {
    route(&category_map(pairs)?, policy, registry)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCandidates {
    pub easy: Vec<String>,
    pub hard_pos: Vec<String>,
    pub hard_neg: Vec<String>,
}

impl GridCandidates {
    /// The easy slot fixed to one model, hard slots searched over `hard`.
    pub fn fixed_easy(easy: &str, hard: &[&str]) -> Self {
        let hard: Vec<String> = hard.iter().map(|s| s.to_string()).collect();
        Self {
            easy: vec![easy.to_string()],
            hard_pos: hard.clone(),
            hard_neg: hard,
        }
    }

    fn policies(&self) -> Result<Vec<RoutingPolicy>> {
        let norm = |v: &[String], slot: &str| -> Result<Vec<String>> {
            let set: BTreeSet<String> = v.iter().cloned().collect();
            if set.is_empty() {
                return Err(Error::Invalid(format!("no candidates for the {slot} slot")));
            }
            Ok(set.into_iter().collect())
        };
        let (e, hp, hn) = (
            norm(&self.easy, "easy")?,
            norm(&self.hard_pos, "hard_pos")?,
            norm(&self.hard_neg, "hard_neg")?,
        );
        let mut out = Vec::with_capacity(e.len() * hp.len() * hn.len());
        for a in &e {
            for b in &hp {
                for c in &hn {
                    out.push(RoutingPolicy::new(a, b, c));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub policy: RoutingPolicy,
    pub evaluation: CorefEvaluation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best: GridRow,
    /// Lexicographic policy order.
    pub rows: Vec<GridRow>,
}

impl GridResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "easy_id,hardpos_id,hardneg_id,muc_f1,b3_f1,ceafe_f1,conll_f1")?;
        for r in &self.rows {
            let e = &r.evaluation;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.policy.easy_model,
                r.policy.hard_pos_model,
                r.policy.hard_neg_model,
                e.muc.f1,
                e.b3.f1,
                e.ceaf_e.f1,
                e.conll_f1
            )?;
        }
        Ok(())
    }
}

/// Clusters routed scores over `mentions` and evaluates with `evaluate`.
pub fn evaluate_policy<F>(
    categories: &[CategorizedPair],
    policy: &RoutingPolicy,
    registry: &Registry,
    mentions: &BTreeSet<String>,
    threshold: f64,
    evaluate: F,
) -> Result<CorefEvaluation>
where
    F: Fn(&ClusterSet) -> Result<CorefEvaluation>,
{
    let merged = route_and_merge(categories, policy, registry)?;
    evaluate(&cluster(mentions, &merged.pair_scores(), threshold)?)
}

/// Exhaustive search over routing policies. The best policy maximizes CoNLL
/// F1; ties go to the lexicographically smallest (easy, hard_pos, hard_neg).
pub fn grid_search<F>(
    categories: &[CategorizedPair],
    registry: &Registry,
    candidates: &GridCandidates,
    mentions: &BTreeSet<String>,
    threshold: f64,
    evaluate: F,
) -> Result<GridResult>
where
    F: Fn(&ClusterSet) -> Result<CorefEvaluation> + Sync,
{
    let cats = category_map(categories)?;
    let policies = candidates.policies()?;
    let rows: Vec<GridRow> = policies
        .into_par_iter()
        .map(|policy| {
            let merged = route(&cats, &policy, registry)?;
            let clusters = cluster(mentions, &merged.pair_scores(), threshold)?;
            Ok(GridRow {
                evaluation: evaluate(&clusters)?,
                policy,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = &rows[0];
    for r in &rows[1..] {
        // rows are in ascending policy order, so strict > keeps the smallest on ties
        if r.evaluation.conll_f1 > best.evaluation.conll_f1 {
            best = r;
        }
    }
    Ok(GridResult {
        best: best.clone(),
        rows,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub total: usize,
    pub hard: usize,
}

impl OutcomeCounts {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hard as f64 / self.total as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProportionReport {
    pub model_id: String,
    pub tp_hard: f64,
    pub fp_hard: f64,
    pub fn_hard: f64,
    pub tp: OutcomeCounts,
    pub fp: OutcomeCounts,
    #[serde(rename = "fn")]
    pub fn_: OutcomeCounts,
}

/// Fraction of hard pairs among true positives, false positives and false
/// negatives, with a pair predicted coreferent when `s_mean ≥ threshold`.
pub fn hard_proportions(
    predictions: &PredictionSet,
    pairs: &[CategorizedPair],
    threshold: f64,
) -> Result<ProportionReport> {
    let (mut tp, mut fp, mut fn_) = (
        OutcomeCounts::default(),
        OutcomeCounts::default(),
        OutcomeCounts::default(),
    );
    for p in pairs {
        let predicted = predictions.get(&p.pair.key())?.s_mean >= threshold;
        let bucket = match (predicted, p.pair.label) {
            (true, PairLabel::Coreferent) => &mut tp,
            (true, PairLabel::NonCoreferent) => &mut fp,
            (false, PairLabel::Coreferent) => &mut fn_,
            (false, PairLabel::NonCoreferent) => continue,
            (_, PairLabel::Unknown) => {
                return Err(Error::Invalid(format!("pair {} has no gold label", p.pair.key())))
            }
        };
        bucket.total += 1;
        if p.category.is_hard() {
            bucket.hard += 1;
        }
    }
    Ok(ProportionReport {
        model_id: predictions.model_id.clone(),
        tp_hard: tp.fraction(),
        fp_hard: fp.fraction(),
        fn_hard: fn_.fraction(),
        tp,
        fp,
        fn_,
    })
}
