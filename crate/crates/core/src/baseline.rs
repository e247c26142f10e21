//! A plain single-threaded CBoW negative-sampling trainer.
//!
//! This is a second, deliberately straightforward implementation of the
//! training loop with the global context switched off. It owns its own
//! matrices, sampling and update arithmetic, and consumes random numbers in
//! the same order as [`crate::trainer`], so a one-worker run of the main
//! trainer with `global_context = false` must reproduce it bit for bit.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::corpus::{self, Document, Lexicon, Vocabulary};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::trainer::{stream_rng, TrainConfig};

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-30.0, 30.0)).exp())
}

fn ln_one_plus_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

enum Noise {
    Uniform(usize),
    Weighted(WeightedIndex<f64>),
}

impl Noise {
    fn draw<R: Rng>(&self, rng: &mut R) -> u32 {
        match self {
            Noise::Uniform(v) => rng.gen_range(0..*v) as u32,
            Noise::Weighted(w) => w.sample(rng) as u32,
        }
    }
}

/// Trains CBoW with the sum combiner; returns the parameters and the mean
/// loss of each epoch. Only `config.workers == 1` semantics are modelled.
pub fn train_cbow(docs: &[Document], vocab: &Vocabulary, config: &TrainConfig) -> Result<(ModelParams, Vec<f64>)> {
    config.validate()?;
    let v = vocab.len();
    let h = config.dim;
    let noise = if config.neg_power == 0.0 {
        Noise::Uniform(v)
    } else {
        let weights: Vec<f64> = vocab.counts().iter().map(|&c| (c as f64).powf(config.neg_power)).collect();
        Noise::Weighted(WeightedIndex::new(&weights).map_err(|e| Error::Mismatch(e.to_string()))?)
    };
    if config.negatives > 0 && v < 2 {
        return Err(Error::VocabularyTooSmall(v));
    }
    let discard = vocab.discard_probabilities(config.subsample);

    let mut init_rng = stream_rng(config.seed, 0);
    let mut u: Vec<Vec<f64>> = (0..v)
        .map(|_| (0..h).map(|_| (init_rng.gen::<f64>() - 0.5) / h as f64).collect())
        .collect();
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; h]; v];

    let mut rng = stream_rng(config.seed, 1);
    let total = docs.iter().map(|d| d.original_length as u64).sum::<u64>() as f64 * config.epochs as f64;
    let mut read = 0u64;
    let mut losses = Vec::with_capacity(config.epochs);

    let mut z = vec![0.0; h];
    let mut dz = vec![0.0; h];
    for _ in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut positions = 0u64;
        for doc in docs {
            let progress = (read as f64 / total).min(1.0);
            let lr = config.lr0 * (1.0 - progress).max(1e-4);
            let kept = corpus::subsample_with(doc, &discard, &mut rng).tokens;
            if kept.len() >= 2 {
                for t in 0..kept.len() {
                    let b = rng.gen_range(1..=config.window);
                    let lo = t.saturating_sub(b);
                    let hi = (t + b + 1).min(kept.len());
                    let target = kept[t];
                    let mut outputs = vec![(target, 1.0)];
                    while outputs.len() < config.negatives + 1 {
                        let w = noise.draw(&mut rng);
                        if w != target {
                            outputs.push((w, 0.0));
                        }
                    }

                    z.iter_mut().for_each(|x| *x = 0.0);
                    for p in (lo..hi).filter(|&p| p != t) {
                        for k in 0..h {
                            z[k] += u[kept[p] as usize][k];
                        }
                    }
                    let mut grads = Vec::with_capacity(outputs.len());
                    let mut instance_loss = 0.0;
                    for &(w, label) in &outputs {
                        let mut s = 0.0;
                        for k in 0..h {
                            s += out[w as usize][k] * z[k];
                        }
                        instance_loss += if label > 0.0 { ln_one_plus_exp(-s) } else { ln_one_plus_exp(s) };
                        grads.push(logistic(s) - label);
                    }
                    loss_sum += instance_loss;
                    dz.iter_mut().for_each(|x| *x = 0.0);
                    for (&(w, _), &g) in outputs.iter().zip(&grads) {
                        for k in 0..h {
                            dz[k] += g * out[w as usize][k];
                        }
                    }
                    for (&(w, _), &g) in outputs.iter().zip(&grads) {
                        let c = -(lr * g);
                        for k in 0..h {
                            out[w as usize][k] += c * z[k];
                        }
                    }
                    for p in (lo..hi).filter(|&p| p != t) {
                        let c = -(lr * 1.0);
                        for k in 0..h {
                            u[kept[p] as usize][k] += c * dz[k];
                        }
                    }
                    positions += 1;
                }
            }
            read += doc.original_length as u64;
        }
        losses.push(if positions > 0 { loss_sum / positions as f64 } else { 0.0 });
    }

    let params = ModelParams::from_parts(v, h, u.concat(), out.concat())?;
    Ok((params, losses))
}
