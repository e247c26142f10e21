//! Command-line frontend. Reports go to stdout as JSON, logs to stderr.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::corpus::{self, Lexicon, Vocabulary};
use crate::diagnostics;
use crate::error::Error;
use crate::eval::{self, classifier};
use crate::inference::{self, Embeddings, WordVectors};
use crate::model::{Combiner, NegSampleTable};
use crate::trainer::{self, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "corruptvec", version, about = "Document vectors through corruption")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train word embeddings on a corpus with one document per line
    Train(TrainArgs),
    /// Embed each line of a file as the average of its word vectors
    Embed(EmbedArgs),
    /// Score analogy questions
    Analogy(AnalogyArgs),
    /// Nearest neighbors of a word
    Nn(NnArgs),
    /// Words with the smallest embedding norms
    Norms(NormsArgs),
    /// Fit and evaluate a logistic classifier on document features
    Classify(ClassifyArgs),
    /// Corruption regularizer per word on a trained model
    Diag(DiagArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct TrainFlags {
    /// Embedding dimension
    #[arg(long, default_value_t = 100)]
    pub size: usize,
    /// Maximum window half-size
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Corruption rate q of the global context, in [0, 1)
    #[arg(long, default_value_t = 0.9, conflicts_with = "no_global_context")]
    pub corruption: f64,
    /// Negative samples per target
    #[arg(long, default_value_t = 5)]
    pub negative: usize,
    /// Subsampling threshold; 0 disables
    #[arg(long, default_value_t = 1e-4)]
    pub sample: f64,
    /// Drop words seen fewer times than this
    #[arg(long, default_value_t = 10)]
    pub min_count: u64,
    /// Initial learning rate
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Training epochs
    #[arg(long, default_value_t = 10)]
    pub iter: usize,
    /// Worker threads [default: available cores]
    #[arg(long, env = "CORRUPTVEC_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Exponent of the negative-sampling distribution; 0 is uniform
    #[arg(long, default_value_t = 0.0)]
    pub neg_power: f64,
    /// Train plain CBoW without the document term
    #[arg(long, alias = "baseline-cbow")]
    pub no_global_context: bool,
    /// How window vectors are combined
    #[arg(long, value_enum, default_value_t = CombinerArg::Sum)]
    pub combiner: CombinerArg,
    /// Draw a new corruption for every target position
    #[arg(long)]
    pub resample_per_position: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum CombinerArg {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Word vectors, text format
    #[arg(long)]
    pub output_words: Option<PathBuf>,
    /// Word vectors, binary format
    #[arg(long)]
    pub output_binary: Option<PathBuf>,
    /// Full checkpoint with both embedding matrices and counts
    #[arg(long)]
    pub output_model: Option<PathBuf>,
    /// Vocabulary as word<TAB>count lines
    #[arg(long)]
    pub save_vocab: Option<PathBuf>,
    /// Training report as JSON
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Word vectors (text, binary or checkpoint)
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalogyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub questions: PathBuf,
    /// Only the most frequent words are candidates
    #[arg(long, default_value_t = 30000)]
    pub restrict: usize,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct NnArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub word: String,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct NormsArgs {
    /// Checkpoint, or word vectors together with --vocab
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub bottom: usize,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub train_features: PathBuf,
    #[arg(long)]
    pub train_labels: PathBuf,
    #[arg(long)]
    pub test_features: PathBuf,
    #[arg(long)]
    pub test_labels: PathBuf,
    /// L2 penalty on the weights
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    #[arg(long, default_value_t = 10000)]
    pub max_iter: usize,
    /// Standardize features using training-set statistics
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    /// Checkpoint written by `train --output-model`
    #[arg(long)]
    pub model: PathBuf,
    /// Documents to build instances from
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub corruption: f64,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub negative: usize,
    #[arg(long, default_value_t = 0.0)]
    pub neg_power: f64,
    /// Use at most this many documents
    #[arg(long, default_value_t = 1000)]
    pub max_docs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Per-word report as JSON lines
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Maps parsed training flags onto a validated configuration.
pub fn config_from_flags(flags: &TrainFlags) -> Result<TrainConfig, Error> {
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        dim: flags.size,
        window: flags.window,
        corruption: if flags.no_global_context { 0.0 } else { flags.corruption },
        negatives: flags.negative,
        subsample: flags.sample,
        lr0: flags.alpha,
        epochs: flags.iter,
        min_count: flags.min_count,
        workers: flags.threads.unwrap_or(defaults.workers),
        seed: flags.seed,
        neg_power: flags.neg_power,
        global_context: !flags.no_global_context,
        combiner: match flags.combiner {
            CombinerArg::Sum => Combiner::Sum,
            CombinerArg::Mean => Combiner::Mean,
        },
        resample_per_position: flags.resample_per_position,
    };
    rate_check(flags.corruption)?;
    config.validate()?;
    Ok(config)
}

fn rate_check(q: f64) -> Result<(), Error> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::param("--corruption", q, "must lie in [0, 1)"));
    }
    Ok(())
}

fn set_threads(threads: Option<usize>) {
    if let Some(n) = threads.filter(|&n| n > 0) {
        // only fails if a pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_vocab_for(model: &std::path::Path, vocab: Option<&std::path::Path>) -> anyhow::Result<(Embeddings, Vocabulary)> {
    if let Some(v) = vocab {
        let vectors = inference::load_any_word_vectors(model)?;
        let vocab = Vocabulary::load_dump(v)?;
        return Ok((vectors, vocab));
    }
    let (params, vocab) = inference::load_model(model)
        .with_context(|| format!("{} is not a checkpoint; pass --vocab", model.display()))?;
    Ok((Embeddings::from_model(&params, &vocab), vocab))
}

fn train_cmd(args: &TrainArgs) -> anyhow::Result<()> {
    let config = config_from_flags(&args.flags)?;
    if args.output_words.is_none() && args.output_binary.is_none() && args.output_model.is_none() {
        log::warn!("no output requested; the trained model will be discarded");
    }
    let (params, vocab, report) = trainer::train(&args.input, &config)?;
    if let Some(p) = &args.output_words {
        inference::save_word_vectors(&params, vocab.words(), p)?;
    }
    if let Some(p) = &args.output_binary {
        inference::save_word_vectors_binary(&params, vocab.words(), p)?;
    }
    if let Some(p) = &args.output_model {
        inference::save_model(&params, &vocab, p)?;
    }
    if let Some(p) = &args.save_vocab {
        vocab.save_dump(p)?;
    }
    let summary = json!({ "config": config, "report": report });
    if let Some(p) = &args.report {
        std::fs::write(p, serde_json::to_string_pretty(&summary)?)?;
    }
    print_json(&summary)
}

fn diag_cmd(args: &DiagArgs) -> anyhow::Result<()> {
    let (params, vocab) = inference::load_model(&args.model)?;
    let mut docs = Vec::new();
    corpus::for_each_line(&args.input, |line| {
        if docs.len() < args.max_docs {
            let doc = corpus::encode(line, &vocab);
            if !doc.is_empty() {
                docs.push(doc);
            }
        }
        Ok(())
    })?;
    if docs.is_empty() {
        bail!(Error::EmptyCorpus);
    }
    let table = NegSampleTable::from_counts(vocab.counts(), args.neg_power)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let instances = diagnostics::position_instances(&docs, args.window, args.negative, &table, &mut rng)?;
    let report = diagnostics::regularizer(&params, &vocab, &instances, args.corruption)?;
    let spearman = diagnostics::reg_frequency_correlation(&report).ok();
    if let Some(p) = &args.output {
        let mut out = String::new();
        for e in &report.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        std::fs::write(p, out)?;
    }
    print_json(&json!({
        "q": report.q,
        "coefficient": report.coefficient,
        "documents": docs.len(),
        "instances": instances.len(),
        "spearman_count_vs_R": spearman,
        "words": if args.output.is_some() { serde_json::Value::Null } else { serde_json::to_value(&report.entries)? },
    }))
}

fn classify_cmd(args: &ClassifyArgs) -> anyhow::Result<()> {
    let mut train_x = classifier::load_features(&args.train_features)?;
    let train_y = classifier::load_labels(&args.train_labels)?;
    let mut test_x = classifier::load_features(&args.test_features)?;
    let test_y = classifier::load_labels(&args.test_labels)?;
    if test_x.len() != test_y.len() {
        bail!(Error::Mismatch(format!("{} test rows but {} labels", test_x.len(), test_y.len())));
    }
    if args.standardize {
        let s = classifier::Standardizer::fit(&train_x);
        train_x = s.apply(&train_x);
        test_x = s.apply(&test_x);
    }
    let options = classifier::FitOptions {
        l2: args.l2,
        max_iter: args.max_iter,
        ..Default::default()
    };
    let (clf, fit) = classifier::fit_linear_with(&train_x, &train_y, &options)?;
    print_json(&json!({
        "train_error": classifier::error_rate(&clf, &train_x, &train_y),
        "test_error": classifier::error_rate(&clf, &test_x, &test_y),
        "classes": clf.labels,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "grad_norm": fit.grad_norm,
    }))
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(args) => train_cmd(&args),
        Command::Embed(args) => {
            set_threads(args.threads);
            let vectors = inference::load_any_word_vectors(&args.model)?;
            let rows = inference::embed_corpus(&vectors, &args.input, &args.output)?;
            print_json(&json!({ "documents": rows, "dim": vectors.dim() }))
        }
        Command::Analogy(args) => {
            set_threads(args.threads);
            let vectors = inference::load_any_word_vectors(&args.model)?;
            let questions = eval::load_questions(&args.questions)?;
            print_json(&eval::analogy_eval(&vectors, &questions, args.restrict))
        }
        Command::Nn(args) => {
            let vectors = inference::load_any_word_vectors(&args.model)?;
            print_json(&eval::nearest_neighbors(&vectors, &args.word, args.top)?)
        }
        Command::Norms(args) => {
            let (vectors, vocab) = load_vocab_for(&args.model, args.vocab.as_deref())?;
            if vocab.len() == 0 {
                bail!(Error::EmptyCorpus);
            }
            print_json(&eval::norm_report(&vectors, &vocab, args.bottom))
        }
        Command::Classify(args) => classify_cmd(&args),
        Command::Diag(args) => diag_cmd(&args),
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Error>().is_some_and(|e| matches!(e, Error::InvalidParameter { .. })) {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(args: &[&str]) -> Result<TrainFlags, clap::Error> {
        let argv = ["corruptvec", "train", "--input", "x"].iter().chain(args);
        match Cli::try_parse_from(argv)?.command {
            Command::Train(t) => Ok(t.flags),
            _ => unreachable!(),
        }
    }

    #[test]
    fn defaults_match_config() {
        let mut config = config_from_flags(&flags(&[]).unwrap()).unwrap();
        config.workers = TrainConfig::default().workers;
        assert_eq!(config, TrainConfig::default());
    }

    #[test]
    fn corruption_range_is_checked() {
        let e = config_from_flags(&flags(&["--corruption", "1.0"]).unwrap()).unwrap_err();
        assert!(e.to_string().contains("--corruption"));
    }

    #[test]
    fn baseline_conflicts_with_corruption() {
        assert!(flags(&["--baseline-cbow", "--corruption", "0.5"]).is_err());
        let config = config_from_flags(&flags(&["--no-global-context"]).unwrap()).unwrap();
        assert!(!config.global_context);
    }

    #[test]
    fn neg_power_maps_through() {
        let config = config_from_flags(&flags(&["--neg-power", "0.75"]).unwrap()).unwrap();
        assert_eq!(config.neg_power, 0.75);
    }
}
