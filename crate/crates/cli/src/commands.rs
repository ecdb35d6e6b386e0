use std::collections::BTreeSet;
use std::fmt;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use cdcr_core::binio::write_atomic;
use cdcr_core::clusterer::{cluster, read_conll, write_conll, ClusterSet};
use cdcr_core::corpus::{generate_pairs, load_corpus, load_pairs, load_synonyms, write_pairs, Corpus, Split, SynonymSet};
use cdcr_core::difficulty::{difficulty_histogram, read_categories, write_categories};
use cdcr_core::embedstore::EmbeddingStore;
use cdcr_core::ensemble::{grid_search, hard_proportions, route_and_merge, GridCandidates, PredictionSet, Registry, ORACLE_NOTE};
use cdcr_core::features::{FeatureKind, FeatureSource};
use cdcr_core::linmap::{fit_bidirectional, LinearMap};
use cdcr_core::pipeline::{self, evaluator, metrics_report, write_provenance, RunConfig, TEXT_MODEL};
use cdcr_core::scorer::ScorerParams;
use cdcr_core::synth::{self, SynthConfig};
use cdcr_core::taxonomy::load_taxonomy;
use cdcr_core::Error;

use crate::config;
use crate::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(e) => e.kind(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn report_json(kind: &str, message: &str, code: i32) {
    let body = json!({"error": {"kind": kind, "message": message.trim_end()}, "exit_code": code});
    eprintln!("{body}");
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))?;
    }
    let mut cfg = config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::Pairs(a) => pairs_cmd(&mut cfg, a),
        Command::Fitmap(a) => fitmap_cmd(&mut cfg, a),
        Command::Train(a) => train_cmd(&mut cfg, a),
        Command::Score(a) => score_cmd(&mut cfg, a),
        Command::Cluster(a) => cluster_cmd(&mut cfg, a),
        Command::Eval(a) => eval_cmd(&mut cfg, a),
        Command::Categorize(a) => categorize_cmd(&mut cfg, a),
        Command::Ensemble(a) => ensemble_cmd(&mut cfg, a),
        Command::RunAll(a) => run_all_cmd(&mut cfg, a),
    }
}

fn require(value: &str, what: &str) -> Result<()> {
    if value.is_empty() {
        return Err(CliError::Usage(format!("{what} is required (flag or config)")));
    }
    Ok(())
}

fn split(s: &str) -> Result<Split> {
    s.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

fn load_store(paths: &[PathBuf]) -> Result<EmbeddingStore> {
    if paths.is_empty() {
        return Err(CliError::Usage("at least one --embeddings file is required".into()));
    }
    let mut store = EmbeddingStore::new();
    for p in paths {
        store.add_path(p)?;
    }
    Ok(store)
}

fn source<'a>(cfg: &'a RunConfig, store: &'a EmbeddingStore) -> Result<FeatureSource<'a>> {
    require(&cfg.text_encoder, "--text-encoder")?;
    require(&cfg.vision_encoder, "--vision-encoder")?;
    Ok(FeatureSource {
        store,
        text_encoder: &cfg.text_encoder,
        vision_encoder: &cfg.vision_encoder,
        fallback: cfg.pair_fallback,
    })
}

fn render<F>(f: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::io("<buffer>", e))?;
    Ok(buf)
}

fn json_bytes(v: &Value) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("json serializes");
    b.push(b'\n');
    b
}

/// Provenance: resolved config plus the subcommand's own arguments.
fn provenance(cfg: &RunConfig, command: &str, args: Value) -> Value {
    json!({"command": command, "args": args, "config": cfg.provenance()})
}

fn emit(path: &Path, bytes: &[u8], kind: &str, prov: &Value) -> Result<()> {
    write_atomic(path, bytes)?;
    write_provenance(path, kind, prov)?;
    Ok(())
}

fn synth_cmd(a: &crate::SynthArgs) -> Result<()> {
    let mut sc = SynthConfig::default();
    if let Some(s) = a.seed {
        sc.seed = s;
    }
    let fixture = synth::generate(&sc)?;
    let dir = std::path::absolute(&a.out).map_err(|e| Error::io(&a.out, e))?;
    fixture.write_to(&dir)?;
    let cfg = synth::run_config(&dir, &dir.join("run"));
    write_atomic(dir.join("run.toml"), config::to_toml(&cfg)?.as_bytes())?;
    println!("{}", dir.join("run.toml").display());
    Ok(())
}

fn pairs_cmd(cfg: &mut RunConfig, a: &crate::PairsArgs) -> Result<()> {
    if a.oracle {
        cfg.oracle_pruning = true;
    }
    if a.no_oracle {
        cfg.oracle_pruning = false;
    }
    if a.synonyms.is_some() {
        cfg.synonyms.clone_from(&a.synonyms);
    }
    let corpus = load_corpus(&a.corpus, split(&a.split)?)?;
    let synonyms = match &cfg.synonyms {
        Some(p) => load_synonyms(p)?,
        None => SynonymSet::new(),
    };
    let pairs = generate_pairs(&corpus, &pipeline::pruning(cfg, &synonyms));
    let bytes = render(|b| write_pairs(b, &pairs))?;
    let prov = provenance(cfg, "pairs", json!({"corpus": a.corpus, "split": a.split}));
    emit(&a.out, &bytes, "pairs", &prov)?;
    eprintln!("{} pairs", pairs.len());
    Ok(())
}

fn fitmap_cmd(cfg: &mut RunConfig, a: &crate::FitmapArgs) -> Result<()> {
    config::apply_embeddings(cfg, &a.emb)?;
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if a.positives_only {
        cfg.map_positives_only = true;
    }
    let store = load_store(&cfg.embeddings)?;
    let src = source(cfg, &store)?;
    let pairs = load_pairs(&a.pairs)?;
    let (xt, xv) = src.map_training_matrices(&pairs, cfg.map_positives_only)?;
    let fit = fit_bidirectional(&xt, &xv, cfg.lambda)?;
    let prov = provenance(cfg, "fitmap", json!({"pairs": a.pairs}));
    let maps = [
        (&fit.text_to_vision, &fit.text_to_vision_report),
        (&fit.vision_to_text, &fit.vision_to_text_report),
    ];
    let encoded: Vec<Vec<u8>> = maps.iter().map(|(m, _)| m.to_bytes()).collect::<std::result::Result<_, _>>()?;
    for ((map, _), bytes) in maps.iter().zip(&encoded) {
        emit(&a.out_dir.join(format!("{}.lsem", map.direction)), bytes, "linear-map", &prov)?;
    }
    let report = json!({
        "text_to_vision": fit.text_to_vision_report,
        "vision_to_text": fit.vision_to_text_report,
        "config": prov,
    });
    write_atomic(a.out_dir.join("fit_report.json"), &json_bytes(&report))?;
    Ok(())
}

fn load_map(kind: FeatureKind, path: Option<&Path>) -> Result<Option<LinearMap>> {
    match (kind, path) {
        (FeatureKind::Mapped(_), Some(p)) => Ok(Some(LinearMap::read(p)?)),
        (FeatureKind::Mapped(_), None) => {
            Err(CliError::Usage(format!("--map is required for kind {kind}")))
        }
        (_, Some(_)) => Err(CliError::Usage(format!("--map is only valid for mapped kinds, not {kind}"))),
        (_, None) => Ok(None),
    }
}

fn train_cmd(cfg: &mut RunConfig, a: &crate::TrainArgs) -> Result<()> {
    config::apply_embeddings(cfg, &a.emb)?;
    config::apply_scorer(cfg, &a.scorer);
    let map = load_map(a.kind, a.map.as_deref())?;
    let store = load_store(&cfg.embeddings)?;
    let src = source(cfg, &store)?;
    let pairs = load_pairs(&a.pairs)?;
    let (params, trace) = pipeline::train_model(&src, a.kind, map.as_ref(), &pairs, &cfg.scorer)?;
    let prov = provenance(cfg, "train", json!({"pairs": a.pairs, "kind": a.kind, "map": a.map}));
    emit(&a.out, &params.to_bytes()?, "scorer", &prov)?;
    println!("{}", json!({"epoch_loss": trace}));
    Ok(())
}

fn score_cmd(cfg: &mut RunConfig, a: &crate::ScoreArgs) -> Result<()> {
    config::apply_embeddings(cfg, &a.emb)?;
    let map = load_map(a.kind, a.map.as_deref())?;
    let params = ScorerParams::read(&a.scorer)?;
    let store = load_store(&cfg.embeddings)?;
    let src = source(cfg, &store)?;
    let pairs = load_pairs(&a.pairs)?;
    let scores = src.score_pairs(&params, a.kind, map.as_ref(), &pairs)?;
    let id = a
        .out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model")
        .to_string();
    let set = PredictionSet::new(id, scores)?;
    let prov = provenance(cfg, "score", json!({"pairs": a.pairs, "kind": a.kind, "scorer": a.scorer, "map": a.map}));
    emit(&a.out, &render(|b| set.write_csv(b))?, "scores", &prov)
}

fn cluster_cmd(cfg: &mut RunConfig, a: &crate::ClusterArgs) -> Result<()> {
    if let Some(t) = a.threshold {
        cfg.threshold = t;
    }
    let corpus = load_corpus(&a.corpus, Split::Test)?;
    let file = std::fs::File::open(&a.scores).map_err(|e| Error::io(&a.scores, e))?;
    let set = PredictionSet::read_csv("scores", BufReader::new(file))?;
    let clusters = cluster(&corpus.mention_ids(), &set.pair_scores(), cfg.threshold)?;
    let jsonl = render(|b| clusters.write_jsonl(b))?;
    let conll = match &a.conll {
        Some(_) => {
            let mut buf = Vec::new();
            write_conll(&mut buf, &corpus, &clusters)?;
            Some(buf)
        }
        None => None,
    };
    let prov = provenance(cfg, "cluster", json!({"scores": a.scores, "corpus": a.corpus}));
    emit(&a.out, &jsonl, "clusters", &prov)?;
    if let (Some(path), Some(bytes)) = (&a.conll, conll) {
        emit(path, &bytes, "clusters", &prov)?;
    }
    eprintln!("{} clusters", clusters.len());
    Ok(())
}

fn read_partition(path: &Path) -> Result<ClusterSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let conll = path.extension().is_some_and(|e| e == "conll");
    Ok(if conll {
        read_conll(reader)?
    } else {
        ClusterSet::read_jsonl(reader)?
    })
}

fn eval_cmd(cfg: &mut RunConfig, a: &crate::EvalArgs) -> Result<()> {
    if let Some(s) = &a.aggregation {
        cfg.aggregation = config::parse_aggregation(s)?;
    }
    let key = read_partition(&a.key)?;
    let response = read_partition(&a.response)?;
    let corpus: Option<Corpus> = match &a.corpus {
        Some(p) => Some(load_corpus(p, Split::Test)?),
        None => None,
    };
    let evaluation = match (cfg.aggregation, &corpus) {
        (cdcr_core::metrics::Aggregation::Micro, _) => cdcr_core::metrics::evaluate(&key, &response)?,
        (agg, Some(c)) => evaluator(&key, c, agg)(&response)?,
        (_, None) => {
            return Err(CliError::Usage("macro aggregation needs --corpus for topics".into()))
        }
    };
    let prov = provenance(cfg, "eval", json!({"key": a.key, "response": a.response}));
    let report = metrics_report(&evaluation, &prov);
    let bytes = json_bytes(&report);
    if let Some(out) = &a.out {
        write_atomic(out, &bytes)?;
    }
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(())
}

fn categorize_cmd(cfg: &mut RunConfig, a: &crate::CategorizeArgs) -> Result<()> {
    if let Some(t) = &a.taxonomy {
        cfg.taxonomy.clone_from(t);
    }
    if !a.embeddings.is_empty() {
        cfg.embeddings.clone_from(&a.embeddings);
    }
    if let Some(s) = &a.sentence_encoder {
        cfg.sentence_encoder.clone_from(s);
    }
    if let Some(b) = a.bins {
        cfg.histogram_bins = b;
    }
    require(&cfg.sentence_encoder, "--sentence-encoder")?;
    if cfg.taxonomy.as_os_str().is_empty() {
        return Err(CliError::Usage("--taxonomy is required (flag or config)".into()));
    }
    let corpus = load_corpus(&a.corpus, split(&a.split)?)?;
    let taxonomy = load_taxonomy(&cfg.taxonomy)?;
    let store = load_store(&cfg.embeddings)?;
    let pairs = load_pairs(&a.pairs)?;
    let (cats, means) = pipeline::categorize_pairs(&pairs, &corpus, &taxonomy, &store, &cfg.sentence_encoder)?;
    let hist = difficulty_histogram(
        &cats.iter().map(|c| (c.components.total, c.category)).collect::<Vec<_>>(),
        cfg.histogram_bins,
    )?;
    let csv = render(|b| write_categories(b, &cats))?;
    let hist_csv = render(|b| hist.write_csv(b))?;
    let prov = provenance(cfg, "categorize", json!({"pairs": a.pairs, "corpus": a.corpus}));
    emit(&a.out, &csv, "categories", &prov)?;
    if let Some(h) = &a.histogram {
        emit(h, &hist_csv, "histogram", &prov)?;
    }
    println!("{}", json!({"label_means": means, "pairs": cats.len()}));
    Ok(())
}

fn ensemble_cmd(cfg: &mut RunConfig, a: &crate::EnsembleArgs) -> Result<()> {
    if let Some(t) = a.threshold {
        cfg.threshold = t;
    }
    if let Some(s) = &a.aggregation {
        cfg.aggregation = config::parse_aggregation(s)?;
    }
    if !a.easy.is_empty() {
        cfg.easy_candidates.clone_from(&a.easy);
    }
    if !a.hard.is_empty() {
        cfg.hard_candidates.clone_from(&a.hard);
    }
    let file = std::fs::File::open(&a.categories).map_err(|e| Error::io(&a.categories, e))?;
    let cats = read_categories(BufReader::new(file))?;
    let registry = Registry::load_dir(&a.registry)?;
    let corpus = load_corpus(&a.corpus, split(&a.split)?)?;
    let gold = ClusterSet::gold(&corpus)?;
    let mentions: BTreeSet<String> = corpus.mention_ids();
    let all: Vec<String> = registry.ids().iter().map(|s| s.to_string()).collect();
    let or = |v: &[String], d: Vec<String>| if v.is_empty() { d } else { v.to_vec() };
    let candidates = GridCandidates {
        easy: or(&cfg.easy_candidates, vec![TEXT_MODEL.to_string()]),
        hard_pos: or(&cfg.hard_candidates, all.clone()),
        hard_neg: or(&cfg.hard_candidates, all),
    };
    let eval = evaluator(&gold, &corpus, cfg.aggregation);
    let grid = grid_search(&cats, &registry, &candidates, &mentions, cfg.threshold, &eval)?;
    let best = route_and_merge(&cats, &grid.best.policy, &registry)?;
    let mut proportions = Vec::new();
    for id in registry.ids() {
        proportions.push(hard_proportions(registry.get(id)?, &cats, cfg.threshold)?);
    }
    let prov = provenance(cfg, "ensemble", json!({"categories": a.categories, "registry": a.registry}));
    let report = json!({
        "note": ORACLE_NOTE,
        "best_policy": grid.best.policy,
        "best_evaluation": grid.best.evaluation,
        "best_proportions": hard_proportions(&best, &cats, cfg.threshold)?,
        "model_proportions": proportions,
        "config": prov,
    });
    let grid_csv = render(|b| grid.write_csv(b))?;
    emit(&a.out_dir.join("grid.csv"), &grid_csv, "grid", &prov)?;
    write_atomic(a.out_dir.join("report.json"), &json_bytes(&report))?;
    write_atomic(
        a.out_dir.join("ensemble_scores.csv"),
        &render(|b| best.write_csv(b))?,
    )?;
    eprintln!("note: {ORACLE_NOTE}");
    println!("{}", json!({"best_policy": grid.best.policy, "conll_f1": grid.best.evaluation.conll_f1}));
    Ok(())
}

fn run_all_cmd(cfg: &mut RunConfig, a: &crate::RunAllArgs) -> Result<()> {
    config::apply_run_all(cfg, a)?;
    cfg.validate().map_err(|e| match e {
        Error::Invalid(m) => CliError::Usage(m),
        other => CliError::Data(other),
    })?;
    let summary = pipeline::run_all(cfg)?;
    eprintln!("note: {ORACLE_NOTE}");
    let models: Vec<Value> = summary
        .models
        .iter()
        .map(|m| json!({"model": m.id, "conll_f1": m.evaluation.conll_f1}))
        .collect();
    println!(
        "{}",
        json!({
            "output_dir": cfg.output_dir,
            "models": models,
            "transfer_conll_f1": summary.ensemble.transfer_evaluation.conll_f1,
            "best_policy": summary.ensemble.best_policy,
            "best_conll_f1": summary.ensemble.best_evaluation.conll_f1,
        })
    );
    Ok(())
}
