//! Stochastic optimization over a corpus.
//!
//! Workers own contiguous shards of the document list and update the shared
//! parameter matrices without locks. Every scalar is an `AtomicU64` holding
//! `f64` bits and accessed with relaxed ordering, so concurrent updates to
//! the same column may be lost but never torn. A single worker is fully
//! deterministic for a given seed.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, Document, Lexicon, Vocabulary};
use crate::corruption::{self, CorruptedContext};
use crate::error::{Error, Result};
use crate::model::{
    self, Combiner, GlobalContext, Gradients, ModelParams, NegSampleTable, ParamStore, ParamUpdate,
    TrainingInstance,
};

/// Floor of the decayed learning rate, relative to `lr0`.
pub const MIN_LR_FRACTION: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Embedding dimension `h`.
    pub dim: usize,
    /// Maximum half-window; each position draws its own size in `1..=window`.
    pub window: usize,
    /// Corruption rate `q` of the global context.
    pub corruption: f64,
    pub negatives: usize,
    /// Subsampling threshold `t`; `0` disables subsampling.
    pub subsample: f64,
    pub lr0: f64,
    pub epochs: usize,
    pub min_count: u64,
    pub workers: usize,
    pub seed: u64,
    /// Exponent of the negative-sampling distribution; `0` is uniform.
    pub neg_power: f64,
    /// `false` trains plain CBoW.
    pub global_context: bool,
    pub combiner: Combiner,
    /// Draw a fresh corruption for every target position instead of once
    /// per document visit.
    pub resample_per_position: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            window: 5,
            corruption: 0.9,
            negatives: 5,
            subsample: 1e-4,
            lr0: 0.05,
            epochs: 10,
            min_count: 10,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            seed: 1,
            neg_power: 0.0,
            global_context: true,
            combiner: Combiner::Sum,
            resample_per_position: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        corruption::check_rate(self.corruption)?;
        if self.dim == 0 {
            return Err(Error::param("dim", self.dim, "must be positive"));
        }
        if self.window == 0 {
            return Err(Error::param("window", self.window, "must be at least 1"));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::param("lr0", self.lr0, "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs", self.epochs, "must be at least 1"));
        }
        if self.min_count == 0 {
            return Err(Error::param("min_count", self.min_count, "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::param("workers", self.workers, "must be at least 1"));
        }
        if !(self.subsample >= 0.0 && self.subsample.is_finite()) {
            return Err(Error::param("subsample", self.subsample, "must be non-negative"));
        }
        if !(self.neg_power >= 0.0 && self.neg_power.is_finite()) {
            return Err(Error::param("neg_power", self.neg_power, "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub positions: u64,
    pub tokens_read: u64,
    pub epoch_loss: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub words_per_sec: f64,
    pub vocab_size: usize,
    pub documents: usize,
    pub skipped_documents: u64,
}

/// `lr0 * max(1 - progress, 1e-4)`.
pub fn lr_schedule(lr0: f64, progress: f64) -> f64 {
    lr0 * (1.0 - progress).max(MIN_LR_FRACTION)
}

/// Seeds are split into streams: 0 initializes parameters, worker `i` uses
/// stream `i + 1`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Parameters shared by all workers.
pub struct SharedParams {
    dim: usize,
    vocab_size: usize,
    input: Vec<AtomicU64>,
    output: Vec<AtomicU64>,
}

#[inline]
fn load(a: &AtomicU64) -> f64 {
    f64::from_bits(a.load(Ordering::Relaxed))
}

#[inline]
fn store(a: &AtomicU64, x: f64) {
    a.store(x.to_bits(), Ordering::Relaxed)
}

impl SharedParams {
    pub fn new(params: &ModelParams) -> Self {
        let wrap = |m: &[f64]| m.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
        SharedParams {
            dim: params.dim(),
            vocab_size: params.vocab_size(),
            input: wrap(params.input_matrix()),
            output: wrap(params.output_matrix()),
        }
    }

    pub fn snapshot(&self) -> ModelParams {
        let unwrap = |m: &[AtomicU64]| m.iter().map(load).collect();
        ModelParams::from_parts(self.vocab_size, self.dim, unwrap(&self.input), unwrap(&self.output))
            .expect("shape is preserved")
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|a| load(a).is_finite())
    }

    #[inline]
    fn column<'a>(&self, m: &'a [AtomicU64], word: u32) -> &'a [AtomicU64] {
        let start = word as usize * self.dim;
        &m[start..start + self.dim]
    }
}

impl ParamStore for SharedParams {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn accumulate_input(&self, word: u32, weight: f64, acc: &mut [f64]) {
        for (a, u) in acc.iter_mut().zip(self.column(&self.input, word)) {
            *a += weight * load(u);
        }
    }

    fn accumulate_output(&self, word: u32, weight: f64, acc: &mut [f64]) {
        for (a, v) in acc.iter_mut().zip(self.column(&self.output, word)) {
            *a += weight * load(v);
        }
    }

    fn output_dot(&self, word: u32, z: &[f64]) -> f64 {
        let mut s = 0.0;
        for (v, x) in self.column(&self.output, word).iter().zip(z) {
            s += load(v) * x;
        }
        s
    }
}

impl ParamUpdate for &SharedParams {
    fn add_to_input(&mut self, word: u32, coef: f64, delta: &[f64]) {
        for (u, d) in self.column(&self.input, word).iter().zip(delta) {
            store(u, load(u) + coef * d);
        }
    }

    fn add_to_output(&mut self, word: u32, coef: f64, delta: &[f64]) {
        for (v, d) in self.column(&self.output, word).iter().zip(delta) {
            store(v, load(v) + coef * d);
        }
    }
}

/// Reads the corpus, builds its vocabulary and trains.
pub fn train(corpus_path: impl AsRef<Path>, config: &TrainConfig) -> Result<(ModelParams, Vocabulary, TrainReport)> {
    config.validate()?;
    let path = corpus_path.as_ref();
    let vocab = corpus::vocab_from_file(path, config.min_count)?;
    log::info!("vocabulary: {} words, {} tokens", vocab.len(), vocab.total_tokens());
    let docs = corpus::read_documents(path, &vocab)?;
    let (params, report) = train_documents(&docs, &vocab, config)?;
    Ok((params, vocab, report))
}

/// Trains on already encoded documents.
pub fn train_documents(docs: &[Document], vocab: &Vocabulary, config: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    let table = NegSampleTable::from_counts(vocab.counts(), config.neg_power)?;
    if config.negatives > 0 && table.len() < 2 {
        return Err(Error::VocabularyTooSmall(table.len()));
    }
    let discard = vocab.discard_probabilities(config.subsample);
    let params = ModelParams::init(vocab.len(), config.dim, &mut stream_rng(config.seed, 0));
    let shared = SharedParams::new(&params);
    drop(params);

    let corpus_tokens: u64 = docs.iter().map(|d| d.original_length as u64).sum();
    if corpus_tokens == 0 {
        return Err(Error::EmptyCorpus);
    }
    let schedule = Schedule {
        lr0: config.lr0,
        total: corpus_tokens as f64 * config.epochs as f64,
        read: AtomicU64::new(0),
    };

    let workers = config.workers.min(docs.len().max(1));
    let shard = docs.len().div_ceil(workers);
    let mut rngs: Vec<ChaCha8Rng> = (0..workers).map(|i| stream_rng(config.seed, i as u64 + 1)).collect();

    let mut report = TrainReport {
        vocab_size: vocab.len(),
        documents: docs.len(),
        ..Default::default()
    };
    let started = Instant::now();
    for epoch in 0..config.epochs {
        let epoch_start = Instant::now();
        let results: Vec<Result<WorkerStats>> = if workers == 1 {
            vec![run_shard(docs, 0, &shared, &table, &discard, config, &schedule, &mut rngs[0], epoch)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = rngs
                    .iter_mut()
                    .enumerate()
                    .map(|(i, rng)| {
                        let start = (i * shard).min(docs.len());
                        let end = ((i + 1) * shard).min(docs.len());
                        let (shared, table, discard, schedule) = (&shared, &table, &discard[..], &schedule);
                        s.spawn(move || {
                            run_shard(&docs[start..end], start, shared, table, discard, config, schedule, rng, epoch)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            })
        };

        let mut stats = WorkerStats::default();
        for r in results {
            stats.merge(r?);
        }
        if !shared.is_finite() {
            return Err(Error::Diverged {
                epoch,
                document: docs.len(),
                source: Box::new(Error::Mismatch("non-finite parameter at epoch boundary".into())),
            });
        }
        let mean_loss = if stats.positions > 0 {
            stats.loss / stats.positions as f64
        } else {
            0.0
        };
        let secs = epoch_start.elapsed().as_secs_f64();
        log::info!(
            "epoch {}: loss {:.5}, {} positions, {:.1}s",
            epoch + 1,
            mean_loss,
            stats.positions,
            secs
        );
        report.positions += stats.positions;
        report.tokens_read += stats.tokens_read;
        report.skipped_documents += stats.skipped;
        report.epoch_loss.push(mean_loss);
        report.epoch_seconds.push(secs);
    }
    let elapsed = started.elapsed().as_secs_f64();
    report.words_per_sec = if elapsed > 0.0 {
        report.tokens_read as f64 / elapsed
    } else {
        0.0
    };
    Ok((shared.snapshot(), report))
}

struct Schedule {
    lr0: f64,
    total: f64,
    read: AtomicU64,
}

impl Schedule {
    fn current(&self) -> f64 {
        let progress = (self.read.load(Ordering::Relaxed) as f64 / self.total).min(1.0);
        lr_schedule(self.lr0, progress)
    }
}

#[derive(Default)]
struct WorkerStats {
    loss: f64,
    positions: u64,
    tokens_read: u64,
    skipped: u64,
}

impl WorkerStats {
    fn merge(&mut self, other: WorkerStats) {
        self.loss += other.loss;
        self.positions += other.positions;
        self.tokens_read += other.tokens_read;
        self.skipped += other.skipped;
    }
}

/// Fills `out` with the window of half-size `b` around `t`, excluding `t`.
#[inline]
pub(crate) fn window_into(tokens: &[u32], t: usize, b: usize, out: &mut Vec<u32>) {
    out.clear();
    let lo = t.saturating_sub(b);
    let hi = (t + b + 1).min(tokens.len());
    out.extend_from_slice(&tokens[lo..t]);
    out.extend_from_slice(&tokens[t + 1..hi]);
}

#[allow(clippy::too_many_arguments)]
fn run_shard(
    docs: &[Document],
    offset: usize,
    shared: &SharedParams,
    table: &NegSampleTable,
    discard: &[f64],
    config: &TrainConfig,
    schedule: &Schedule,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<WorkerStats> {
    let mut stats = WorkerStats::default();
    let mut tokens = Vec::new();
    let mut corrupted = CorruptedContext::default();
    let mut context = Vec::with_capacity(2 * config.window);
    let mut negatives = Vec::with_capacity(config.negatives);
    let mut grads = Gradients::default();
    let mut sink = shared;

    for (i, doc) in docs.iter().enumerate() {
        let lr = schedule.current();
        corpus::subsample_into(doc, discard, rng, &mut tokens);
        if tokens.len() < 2 {
            stats.skipped += 1;
        } else {
            let diverged = |e: Error| Error::Diverged {
                epoch,
                document: offset + i,
                source: Box::new(e),
            };
            if config.global_context {
                corruption::corrupt_into(&tokens, doc.original_length, config.corruption, rng, &mut corrupted)?;
            }
            for t in 0..tokens.len() {
                if config.global_context && config.resample_per_position {
                    corruption::corrupt_into(&tokens, doc.original_length, config.corruption, rng, &mut corrupted)?;
                }
                let b = rng.gen_range(1..=config.window);
                window_into(&tokens, t, b, &mut context);
                let target = tokens[t];
                model::draw_negatives_into(table, config.negatives, rng, target, &mut negatives)?;
                let instance = TrainingInstance {
                    target,
                    context: &context,
                    combiner: config.combiner,
                    global: config.global_context.then_some(GlobalContext {
                        tokens: &corrupted.surviving_tokens,
                        scale: corrupted.scale,
                        length: corrupted.source_length,
                    }),
                };
                model::nll_and_grads_into(shared, &instance, &negatives, &mut grads).map_err(diverged)?;
                grads.apply(lr, &mut sink);
                stats.loss += grads.loss;
                stats.positions += 1;
            }
        }
        stats.tokens_read += doc.original_length as u64;
        schedule.read.fetch_add(doc.original_length as u64, Ordering::Relaxed);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(0.05, 0.0), 0.05);
        assert_eq!(lr_schedule(0.05, 1.0), 0.05 * 1e-4);
        assert_eq!(lr_schedule(0.05, 0.5), 0.025);
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let lr = lr_schedule(0.1, i as f64 / 100.0);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn window_excludes_target() {
        let toks = [10, 11, 12, 13, 14];
        let mut out = Vec::new();
        window_into(&toks, 0, 2, &mut out);
        assert_eq!(out, [11, 12]);
        window_into(&toks, 2, 1, &mut out);
        assert_eq!(out, [11, 13]);
        window_into(&toks, 4, 9, &mut out);
        assert_eq!(out, [10, 11, 12, 13]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { corruption: 1.0, ..Default::default() },
            TrainConfig { corruption: -0.5, ..Default::default() },
            TrainConfig { lr0: 0.0, ..Default::default() },
            TrainConfig { window: 0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn shared_params_roundtrip() {
        let mut rng = stream_rng(3, 0);
        let p = ModelParams::init(7, 4, &mut rng);
        let s = SharedParams::new(&p);
        assert_eq!(s.snapshot(), p);
        let mut sink = &s;
        sink.add_to_input(2, 0.5, &[1.0, 2.0, 3.0, 4.0]);
        let mut q = p.clone();
        q.add_to_input(2, 0.5, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.snapshot(), q);
    }
}
