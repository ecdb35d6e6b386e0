//! Config resolution: flags, then the TOML file, then built-in defaults.
//!
//! The file holds `RunConfig` fields as top-level keys plus an optional
//! `[scorer]` table, e.g.
//!
//! ```toml
//! train_corpus = "data/train.jsonl"
//! embeddings = ["data/text.emb", "data/vision.emb"]
//! lambda = 1.0
//! [scorer]
//! epochs = 10
//! ```

use std::path::Path;

use cdcr_core::embedstore::PairFallback;
use cdcr_core::metrics::Aggregation;
use cdcr_core::pipeline::RunConfig;

use crate::commands::CliError;
use crate::{EmbeddingArgs, RunAllArgs, ScorerArgs};

pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(cdcr_core::Error::io(path, e)))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {}", path.display(), e.message())))
}

pub fn to_toml(cfg: &RunConfig) -> Result<String, CliError> {
    toml::to_string(cfg).map_err(|e| CliError::Usage(format!("cannot serialize config: {e}")))
}

fn set<T>(slot: &mut T, value: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = value {
        *slot = v.clone();
    }
}

pub fn parse_aggregation(s: &str) -> Result<Aggregation, CliError> {
    s.parse().map_err(|e: cdcr_core::Error| CliError::Usage(e.to_string()))
}

pub fn apply_embeddings(cfg: &mut RunConfig, a: &EmbeddingArgs) -> Result<(), CliError> {
    if !a.embeddings.is_empty() {
        cfg.embeddings.clone_from(&a.embeddings);
    }
    set(&mut cfg.text_encoder, &a.text_encoder);
    set(&mut cfg.vision_encoder, &a.vision_encoder);
    if let Some(f) = &a.pair_fallback {
        cfg.pair_fallback = f
            .parse::<PairFallback>()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

pub fn apply_scorer(cfg: &mut RunConfig, a: &ScorerArgs) {
    set(&mut cfg.scorer.epochs, &a.epochs);
    set(&mut cfg.scorer.learning_rate, &a.learning_rate);
    set(&mut cfg.scorer.batch_size, &a.batch_size);
    set(&mut cfg.scorer.hidden1, &a.hidden1);
    set(&mut cfg.scorer.hidden2, &a.hidden2);
    if let Some(s) = a.seed {
        cfg.seed = s;
        cfg.scorer.seed = s;
    }
}

pub fn apply_run_all(cfg: &mut RunConfig, a: &RunAllArgs) -> Result<(), CliError> {
    set(&mut cfg.train_corpus, &a.train_corpus);
    set(&mut cfg.test_corpus, &a.test_corpus);
    set(&mut cfg.taxonomy, &a.taxonomy);
    if a.synonyms.is_some() {
        cfg.synonyms.clone_from(&a.synonyms);
    }
    set(&mut cfg.sentence_encoder, &a.sentence_encoder);
    apply_embeddings(cfg, &a.emb)?;
    apply_scorer(cfg, &a.scorer);
    set(&mut cfg.lambda, &a.lambda);
    set(&mut cfg.threshold, &a.threshold);
    if let Some(s) = &a.aggregation {
        cfg.aggregation = parse_aggregation(s)?;
    }
    set(&mut cfg.output_dir, &a.out_dir);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "lambda = 2.5\nthreshold = 0.7\n[scorer]\nepochs = 3\n").unwrap();
        let mut cfg = load(Some(&path)).unwrap();
        assert_eq!((cfg.lambda, cfg.threshold, cfg.scorer.epochs), (2.5, 0.7, 3));
        assert_eq!(cfg.scorer.hidden1, 768);
        let flags = RunAllArgs {
            lambda: Some(0.5),
            ..RunAllArgs::default()
        };
        apply_run_all(&mut cfg, &flags).unwrap();
        assert_eq!((cfg.lambda, cfg.threshold), (0.5, 0.7));
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "lamda = 1.0\n").unwrap();
        assert!(matches!(load(Some(&path)), Err(CliError::Usage(_))));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig {
            synonyms: Some("s.tsv".into()),
            ..RunConfig::default()
        };
        let back: RunConfig = toml::from_str(&to_toml(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
