//! End-to-end run: pairs, bridge maps, scorers, clustering, evaluation,
//! difficulty categories and the routed ensemble.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::binio::write_atomic;
use crate::clusterer::{cluster, write_conll, ClusterSet, DEFAULT_THRESHOLD};
use crate::corpus::{
    generate_pairs, load_corpus, load_synonyms, write_pairs, Corpus, MentionPair, PruningConfig,
    Split, SynonymSet,
};
use crate::difficulty::{
    categorize_all, difficulty_histogram, pair_similarity_from_store, write_categories,
    CategorizedPair, LabelMeans,
};
use crate::embedstore::{EmbeddingStore, Modality, PairFallback};
use crate::ensemble::{
    evaluate_policy, grid_search, hard_proportions, GridCandidates, GridResult, PredictionSet,
    ProportionReport, Registry, RoutingPolicy, ORACLE_NOTE,
};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSource};
use crate::linmap::{fit_bidirectional, FitReport, LinearMap, MapDirection, DEFAULT_LAMBDA};
use crate::metrics::{evaluate, evaluate_grouped, Aggregation, CorefEvaluation};
use crate::scorer::{init_scorer, train, ScorerConfig, ScorerParams};
use crate::taxonomy::{load_taxonomy, Taxonomy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train_corpus: PathBuf,
    pub test_corpus: PathBuf,
    pub embeddings: Vec<PathBuf>,
    pub taxonomy: PathBuf,
    pub synonyms: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub text_encoder: String,
    pub vision_encoder: String,
    pub sentence_encoder: String,
    pub lambda: f64,
    pub threshold: f64,
    pub seed: u64,
    pub aggregation: Aggregation,
    pub oracle_pruning: bool,
    pub map_positives_only: bool,
    pub pair_fallback: PairFallback,
    pub histogram_bins: usize,
    /// Hard-slot candidates for the grid; empty means every model.
    pub hard_candidates: Vec<String>,
    /// Easy-slot candidates; empty means the text model only.
    pub easy_candidates: Vec<String>,
    pub scorer: ScorerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train_corpus: PathBuf::new(),
            test_corpus: PathBuf::new(),
            embeddings: Vec::new(),
            taxonomy: PathBuf::new(),
            synonyms: None,
            output_dir: PathBuf::from("out"),
            text_encoder: String::new(),
            vision_encoder: String::new(),
            sentence_encoder: String::new(),
            lambda: DEFAULT_LAMBDA,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            aggregation: Aggregation::Micro,
            oracle_pruning: true,
            map_positives_only: false,
            pair_fallback: PairFallback::Error,
            histogram_bins: 10,
            hard_candidates: Vec::new(),
            easy_candidates: Vec::new(),
            scorer: ScorerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let need = |p: &Path, what: &str| -> Result<()> {
            if p.as_os_str().is_empty() {
                return Err(Error::Invalid(format!("{what} path is required")));
            }
            Ok(())
        };
        need(&self.train_corpus, "train corpus")?;
        need(&self.test_corpus, "test corpus")?;
        need(&self.taxonomy, "taxonomy")?;
        if self.embeddings.is_empty() {
            return Err(Error::Invalid("at least one embedding file is required".into()));
        }
        for (v, what) in [
            (&self.text_encoder, "text encoder"),
            (&self.vision_encoder, "vision encoder"),
            (&self.sentence_encoder, "sentence encoder"),
        ] {
            if v.is_empty() {
                return Err(Error::Invalid(format!("{what} name is required")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Invalid(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if self.histogram_bins < 1 {
            return Err(Error::Invalid("histogram_bins must be at least 1".into()));
        }
        self.scorer.validate()
    }

    /// The resolved configuration as embedded in outputs. The output
    /// directory is left out so identical runs into different directories
    /// produce identical reports.
    pub fn provenance(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("output_dir");
        }
        v
    }
}

pub const TEXT_MODEL: &str = "text";
pub const VISION_MODEL: &str = "vision";
pub const FUSED_MODEL: &str = "fused";
pub const V2T_MODEL: &str = "vision_to_text";
pub const T2V_MODEL: &str = "text_to_vision";

/// Model ids with their feature kinds, in training order.
pub const MODELS: [(&str, FeatureKind); 5] = [
    (TEXT_MODEL, FeatureKind::Text),
    (VISION_MODEL, FeatureKind::Vision),
    (FUSED_MODEL, FeatureKind::Fused),
    (V2T_MODEL, FeatureKind::Mapped(MapDirection::VisionToText)),
    (T2V_MODEL, FeatureKind::Mapped(MapDirection::TextToVision)),
];

/// Loaded inputs of a run.
pub struct Inputs {
    pub train: Corpus,
    pub test: Corpus,
    pub store: EmbeddingStore,
    pub taxonomy: Taxonomy,
    pub synonyms: SynonymSet,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let mut store = EmbeddingStore::new();
    for p in &cfg.embeddings {
        store.add_path(p)?;
    }
    let synonyms = match &cfg.synonyms {
        Some(p) => load_synonyms(p)?,
        None => SynonymSet::new(),
    };
    Ok(Inputs {
        train: load_corpus(&cfg.train_corpus, Split::Train)?,
        test: load_corpus(&cfg.test_corpus, Split::Test)?,
        store,
        taxonomy: load_taxonomy(&cfg.taxonomy)?,
        synonyms,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelOutcome {
    pub id: String,
    pub kind: FeatureKind,
    pub train_loss: Vec<f64>,
    pub evaluation: CorefEvaluation,
    pub proportions: ProportionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleOutcome {
    pub note: &'static str,
    /// Text model on easy pairs, mapped vision model on hard pairs.
    pub transfer_policy: RoutingPolicy,
    pub transfer_evaluation: CorefEvaluation,
    pub best_policy: RoutingPolicy,
    pub best_evaluation: CorefEvaluation,
    pub best_proportions: ProportionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub config: Value,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub text_to_vision_fit: FitReport,
    pub vision_to_text_fit: FitReport,
    pub label_means: LabelMeans,
    pub models: Vec<ModelOutcome>,
    pub ensemble: EnsembleOutcome,
}

impl RunSummary {
    pub fn model(&self, id: &str) -> Option<&ModelOutcome> {
        self.models.iter().find(|m| m.id == id)
    }
}

/// Artifacts held in memory until every step has succeeded.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>, Option<&'static str>)>,
}

impl Outputs {
    fn add(&mut self, rel: impl Into<PathBuf>, bytes: Vec<u8>, artifact: Option<&'static str>) {
        self.files.push((rel.into(), bytes, artifact));
    }

    fn text<F>(&mut self, rel: &str, artifact: Option<&'static str>, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| Error::io(rel, e))?;
        self.add(rel, buf, artifact);
        Ok(())
    }

    fn json(&mut self, rel: impl Into<PathBuf>, value: &Value) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("json serializes");
        bytes.push(b'\n');
        self.add(rel, bytes, None);
    }

    fn commit(self, dir: &Path, config: &Value) -> Result<()> {
        for (rel, bytes, artifact) in self.files {
            let path = dir.join(&rel);
            write_atomic(&path, &bytes)?;
            if let Some(kind) = artifact {
                write_provenance(&path, kind, config)?;
            }
        }
        Ok(())
    }
}

/// Writes `<file>.provenance.json` next to an artifact.
pub fn write_provenance(artifact: &Path, kind: &str, config: &Value) -> Result<()> {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.json");
    let side = artifact.with_file_name(name);
    let body = json!({
        "artifact": kind,
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    let mut bytes = serde_json::to_vec_pretty(&body).expect("json serializes");
    bytes.push(b'\n');
    write_atomic(side, &bytes)
}

/// Metrics report: `{muc, b3, ceaf_e, conll_f1, config}`.
pub fn metrics_report(e: &CorefEvaluation, config: &Value) -> Value {
    let mut v = serde_json::to_value(e).expect("metrics serialize");
    v["config"] = config.clone();
    v
}

pub fn pruning(cfg: &RunConfig, synonyms: &SynonymSet) -> PruningConfig {
    PruningConfig {
        synonym_pairs: synonyms.clone(),
        oracle_keep_positives: cfg.oracle_pruning,
        within_topic_only: true,
    }
}

/// Trains one scorer on bidirectional samples.
pub fn train_model(
    source: &FeatureSource<'_>,
    kind: FeatureKind,
    map: Option<&LinearMap>,
    pairs: &[MentionPair],
    base: &ScorerConfig,
) -> Result<(ScorerParams, Vec<f64>)> {
    let cfg = ScorerConfig {
        input_dim: source.input_dim(kind)?,
        ..base.clone()
    };
    let samples = source.training_samples(kind, map, pairs)?;
    let mut params = init_scorer(&cfg)?;
    let trace = train(&mut params, &samples, &cfg)?;
    Ok((params, trace))
}

/// Categorizes labeled pairs of `corpus` using its own label means.
pub fn categorize_pairs(
    pairs: &[MentionPair],
    corpus: &Corpus,
    taxonomy: &Taxonomy,
    store: &EmbeddingStore,
    sentence_encoder: &str,
) -> Result<(Vec<CategorizedPair>, LabelMeans)> {
    let scored = pairs
        .iter()
        .map(|p| {
            Ok((
                p.clone(),
                pair_similarity_from_store(p, corpus, taxonomy, store, sentence_encoder)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    categorize_all(scored, corpus.name())
}

/// Evaluation closure honoring the aggregation mode (macro groups by topic).
pub fn evaluator<'a>(
    gold: &'a ClusterSet,
    corpus: &'a Corpus,
    aggregation: Aggregation,
) -> impl Fn(&ClusterSet) -> Result<CorefEvaluation> + Sync + 'a {
    move |response| match aggregation {
        Aggregation::Micro => evaluate(gold, response),
        Aggregation::Macro => evaluate_grouped(
            gold,
            response,
            |m| Ok(corpus.mention(m)?.topic_id.clone()),
            aggregation,
        ),
    }
}

fn model_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

/// Runs the whole pipeline. Nothing is written until every step succeeds.
pub fn run_all(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    run_with_inputs(cfg, &inputs)
}

pub fn run_with_inputs(cfg: &RunConfig, inputs: &Inputs) -> Result<RunSummary> {
    cfg.validate()?;
    let provenance = cfg.provenance();
    let source = FeatureSource {
        store: &inputs.store,
        text_encoder: &cfg.text_encoder,
        vision_encoder: &cfg.vision_encoder,
        fallback: cfg.pair_fallback,
    };
    for m in [Modality::Text, Modality::Vision] {
        source.hidden_dim(m)?;
    }
    inputs.store.dim(Modality::Text, &cfg.sentence_encoder)?;
    let mut out = Outputs::default();

    let prune = pruning(cfg, &inputs.synonyms);
    let train_pairs = generate_pairs(&inputs.train, &prune);
    let test_pairs = generate_pairs(&inputs.test, &prune);
    if train_pairs.is_empty() || test_pairs.is_empty() {
        return Err(Error::Invalid("pruning left no candidate pairs".into()));
    }
    out.text("pairs/train.jsonl", Some("pairs"), |b| write_pairs(b, &train_pairs))?;
    out.text("pairs/test.jsonl", Some("pairs"), |b| write_pairs(b, &test_pairs))?;

    let (x_text, x_vision) = source.map_training_matrices(&train_pairs, cfg.map_positives_only)?;
    let mut fit = fit_bidirectional(&x_text, &x_vision, cfg.lambda)?;
    fit.text_to_vision.source_encoder.clone_from(&cfg.text_encoder);
    fit.text_to_vision.target_encoder.clone_from(&cfg.vision_encoder);
    fit.vision_to_text.source_encoder.clone_from(&cfg.vision_encoder);
    fit.vision_to_text.target_encoder.clone_from(&cfg.text_encoder);
    for map in [&fit.text_to_vision, &fit.vision_to_text] {
        out.add(format!("maps/{}.lsem", map.direction), map.to_bytes()?, Some("linear-map"));
    }
    let map_for = |kind: FeatureKind| match kind {
        FeatureKind::Mapped(MapDirection::TextToVision) => Some(&fit.text_to_vision),
        FeatureKind::Mapped(MapDirection::VisionToText) => Some(&fit.vision_to_text),
        _ => None,
    };

    let (categories, means) = categorize_pairs(
        &test_pairs,
        &inputs.test,
        &inputs.taxonomy,
        &inputs.store,
        &cfg.sentence_encoder,
    )?;
    out.text("difficulty/categories.csv", Some("categories"), |b| {
        write_categories(b, &categories)
    })?;
    let hist = difficulty_histogram(
        &categories
            .iter()
            .map(|c| (c.components.total, c.category))
            .collect::<Vec<_>>(),
        cfg.histogram_bins,
    )?;
    out.text("difficulty/histogram.csv", Some("histogram"), |b| hist.write_csv(b))?;
    out.json(
        "difficulty/means.json",
        &json!({"label_means": means, "config": provenance}),
    );

    let gold = ClusterSet::gold(&inputs.test)?;
    let mentions: BTreeSet<String> = inputs.test.mention_ids();
    let eval = evaluator(&gold, &inputs.test, cfg.aggregation);

    let mut registry = Registry::new();
    let mut models = Vec::new();
    for (i, (id, kind)) in MODELS.iter().enumerate() {
        let base = ScorerConfig {
            seed: model_seed(cfg.seed, i),
            ..cfg.scorer.clone()
        };
        let map = map_for(*kind);
        let (params, trace) = train_model(&source, *kind, map, &train_pairs, &base)?;
        out.add(format!("scorers/{id}.psc"), params.to_bytes()?, Some("scorer"));
        let scores = source.score_pairs(&params, *kind, map, &test_pairs)?;
        let set = PredictionSet::new(*id, scores)?;
        out.text(&format!("scores/{id}.csv"), Some("scores"), |b| set.write_csv(b))?;
        let clusters = cluster(&mentions, &set.pair_scores(), cfg.threshold)?;
        out.text(&format!("clusters/{id}.jsonl"), Some("clusters"), |b| {
            clusters.write_jsonl(b)
        })?;
        let mut conll = Vec::new();
        write_conll(&mut conll, &inputs.test, &clusters)?;
        out.add(format!("clusters/{id}.conll"), conll, Some("clusters"));
        let evaluation = eval(&clusters)?;
        out.json(format!("metrics/{id}.json"), &metrics_report(&evaluation, &provenance));
        let proportions = hard_proportions(&set, &categories, cfg.threshold)?;
        models.push(ModelOutcome {
            id: id.to_string(),
            kind: *kind,
            train_loss: trace,
            evaluation,
            proportions,
        });
        registry.insert(set)?;
    }

    let ids: Vec<String> = MODELS.iter().map(|(id, _)| id.to_string()).collect();
    let pick = |v: &[String], default: Vec<String>| {
        if v.is_empty() {
            default
        } else {
            v.to_vec()
        }
    };
    let candidates = GridCandidates {
        easy: pick(&cfg.easy_candidates, vec![TEXT_MODEL.to_string()]),
        hard_pos: pick(&cfg.hard_candidates, ids.clone()),
        hard_neg: pick(&cfg.hard_candidates, ids),
    };
    let grid: GridResult =
        grid_search(&categories, &registry, &candidates, &mentions, cfg.threshold, &eval)?;
    out.text("ensemble/grid.csv", Some("grid"), |b| grid.write_csv(b))?;
    let transfer_policy = RoutingPolicy::new(TEXT_MODEL, V2T_MODEL, V2T_MODEL);
    let transfer_evaluation = evaluate_policy(
        &categories,
        &transfer_policy,
        &registry,
        &mentions,
        cfg.threshold,
        &eval,
    )?;
    let best_merged = crate::ensemble::route_and_merge(&categories, &grid.best.policy, &registry)?;
    let ensemble = EnsembleOutcome {
        note: ORACLE_NOTE,
        transfer_policy,
        transfer_evaluation,
        best_policy: grid.best.policy.clone(),
        best_evaluation: grid.best.evaluation,
        best_proportions: hard_proportions(&best_merged, &categories, cfg.threshold)?,
    };
    out.json(
        "metrics/ensemble.json",
        &metrics_report(&ensemble.best_evaluation, &provenance),
    );

    let summary = RunSummary {
        config: provenance.clone(),
        train_pairs: train_pairs.len(),
        test_pairs: test_pairs.len(),
        text_to_vision_fit: fit.text_to_vision_report.clone(),
        vision_to_text_fit: fit.vision_to_text_report.clone(),
        label_means: means,
        models,
        ensemble,
    };
    let mut report = serde_json::to_value(&summary.ensemble).expect("report serializes");
    report["config"] = provenance.clone();
    out.json("ensemble/report.json", &report);
    out.json("run.json", &serde_json::to_value(&summary).expect("summary serializes"));
    out.commit(&cfg.output_dir, &provenance)?;
    Ok(summary)
}
