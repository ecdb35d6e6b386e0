mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cdcr_core::features::FeatureKind;

/// Cross-document event coreference with linear semantic transfer.
#[derive(Debug, Parser)]
#[command(name = "cdcr", version)]
pub struct Cli {
    /// Report errors as JSON on stderr.
    #[arg(long, global = true)]
    pub json: bool,

    /// Worker threads for parallel steps (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic multimodal fixture and a matching run config.
    Synth(SynthArgs),
    /// Generate pruned candidate pairs for a corpus.
    Pairs(PairsArgs),
    /// Fit text->vision and vision->text bridge matrices.
    Fitmap(FitmapArgs),
    /// Train a pairwise scorer.
    Train(TrainArgs),
    /// Score pairs with a trained scorer.
    Score(ScoreArgs),
    /// Cluster scored pairs by thresholded transitive closure.
    Cluster(ClusterArgs),
    /// Evaluate a response partition against a key.
    Eval(EvalArgs),
    /// Compute pair similarities and difficulty categories.
    Categorize(CategorizeArgs),
    /// Grid-search difficulty-routed ensembles over a score registry.
    Ensemble(EnsembleArgs),
    /// Run the whole pipeline from a config.
    RunAll(RunAllArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct EmbeddingArgs {
    /// EMB1 file; repeat for several encoders.
    #[arg(long = "embeddings")]
    pub embeddings: Vec<PathBuf>,
    #[arg(long)]
    pub text_encoder: Option<String>,
    #[arg(long)]
    pub vision_encoder: Option<String>,
    /// What to do when an ordered-pair vector is absent: error or mean.
    #[arg(long)]
    pub pair_fallback: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct ScorerArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden1: Option<usize>,
    #[arg(long)]
    pub hidden2: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// train, dev or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    /// Keep every gold-coreferent pair regardless of lemma overlap.
    #[arg(long, overrides_with = "no_oracle")]
    pub oracle: bool,
    #[arg(long)]
    pub no_oracle: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitmapArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[command(flatten)]
    pub emb: EmbeddingArgs,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fit on gold-coreferent pairs only.
    #[arg(long)]
    pub positives_only: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// text, vision, fused, mapped-vision_to_text or mapped-text_to_vision.
    #[arg(long)]
    pub kind: FeatureKind,
    /// Bridge matrix for mapped kinds.
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[command(flatten)]
    pub emb: EmbeddingArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub kind: FeatureKind,
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub scorer: PathBuf,
    #[command(flatten)]
    pub emb: EmbeddingArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Corpus whose mentions are partitioned.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a CoNLL file.
    #[arg(long)]
    pub conll: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Key partition: cluster JSONL, corpus JSONL or CoNLL (`.conll`).
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub response: PathBuf,
    /// micro or macro (per-topic; needs --corpus).
    #[arg(long)]
    pub aggregation: Option<String>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CategorizeArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long = "embeddings")]
    pub embeddings: Vec<PathBuf>,
    #[arg(long)]
    pub sentence_encoder: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub categories: PathBuf,
    /// Directory of `<model_id>.csv` score files.
    #[arg(long)]
    pub registry: PathBuf,
    /// Gold corpus of the evaluated split.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub aggregation: Option<String>,
    /// Easy-slot candidates (comma separated); default `text`.
    #[arg(long, value_delimiter = ',')]
    pub easy: Vec<String>,
    /// Hard-slot candidates (comma separated); default every registered model.
    #[arg(long, value_delimiter = ',')]
    pub hard: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct RunAllArgs {
    #[arg(long)]
    pub train_corpus: Option<PathBuf>,
    #[arg(long)]
    pub test_corpus: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    #[arg(long)]
    pub sentence_encoder: Option<String>,
    #[command(flatten)]
    pub emb: EmbeddingArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub aggregation: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let json = std::env::args().any(|a| a == "--json");
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if json && e.use_stderr() {
                commands::report_json("usage", &e.to_string(), code);
            } else {
                let _ = e.print();
            }
            return ExitCode::from(code as u8);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.json {
                commands::report_json(e.kind(), &e.to_string(), e.exit_code());
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
