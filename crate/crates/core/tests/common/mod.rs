#![allow(dead_code)]

use corruptvec::corpus::{build_vocab, encode, Document, Vocabulary};
use corruptvec::diagnostics::DiagInstance;
use corruptvec::model::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Both matrices uniform in `(-scale, scale)`.
pub fn random_model(rng: &mut impl Rng, v: usize, h: usize, scale: f64) -> ModelParams {
    let input = (0..v * h).map(|_| rng.gen_range(-scale..scale)).collect();
    let output = (0..v * h).map(|_| rng.gen_range(-scale..scale)).collect();
    ModelParams::from_parts(v, h, input, output).unwrap()
}

/// A target with a short window, `k` negatives and a document of `t` tokens
/// that contains the target.
pub fn random_diag_instance(rng: &mut impl Rng, v: usize, t: usize, k: usize) -> DiagInstance {
    let mut tokens: Vec<u32> = (0..t).map(|_| rng.gen_range(0..v as u32)).collect();
    let pos = rng.gen_range(0..t);
    let target = tokens[pos];
    let context_len = rng.gen_range(0..=3);
    let context = (0..context_len).map(|_| rng.gen_range(0..v as u32)).collect();
    let negatives = (0..k)
        .map(|_| loop {
            let w = rng.gen_range(0..v as u32);
            if w != target {
                break w;
            }
        })
        .collect();
    tokens[pos] = target;
    DiagInstance::new(target, context, negatives, Document::new(tokens))
}

/// Encodes lines with a vocabulary built from them.
pub fn encode_lines(lines: &[String], min_count: u64) -> (Vocabulary, Vec<Document>) {
    let vocab = build_vocab(lines.iter().flat_map(|l| l.split_ascii_whitespace()), min_count).unwrap();
    let docs = lines.iter().map(|l| encode(l, &vocab)).collect();
    (vocab, docs)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// `log sigma(x)` written out independently of the crate.
pub fn oracle_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Objective of a diagnostic instance at a real-valued bag, recomputed from
/// scratch: `sum_o log sigma(+-v_o . z)` with
/// `z = sum_c u_c + (1/T) sum_j x_j u_j`.
pub fn oracle_f(params: &ModelParams, inst: &DiagInstance, bag: &[(u32, f64)]) -> f64 {
    let h = params.dim();
    let t = inst.doc.original_length as f64;
    let mut z = vec![0.0; h];
    for &c in &inst.context {
        for k in 0..h {
            z[k] += params.input(c)[k];
        }
    }
    for &(j, x) in bag {
        for k in 0..h {
            z[k] += x / t * params.input(j)[k];
        }
    }
    let dot = |w: u32| (0..h).map(|k| params.output(w)[k] * z[k]).sum::<f64>();
    let mut f = oracle_log_sigmoid(dot(inst.target));
    for &n in &inst.negatives {
        f += oracle_log_sigmoid(-dot(n));
    }
    f
}

/// A random training instance for an `h x v` model: up to six window words,
/// a corrupted global context and `k` negatives (which may repeat, and may
/// coincide with input words).
pub struct OwnedInstance {
    pub target: u32,
    pub context: Vec<u32>,
    pub global: Vec<u32>,
    pub scale: f64,
    pub length: usize,
    pub negatives: Vec<u32>,
}

impl OwnedInstance {
    pub fn random(rng: &mut impl Rng, v: usize, k: usize) -> Self {
        let length = rng.gen_range(1..=20);
        let q = [0.0, 0.5, 0.9][rng.gen_range(0..3)];
        let mut global = Vec::new();
        for _ in 0..length {
            let w = rng.gen_range(0..v as u32);
            if rng.gen::<f64>() >= q {
                global.push(w);
            }
        }
        let context_len = rng.gen_range(if global.is_empty() { 1 } else { 0 }..=6);
        let target = rng.gen_range(0..v as u32);
        OwnedInstance {
            target,
            context: (0..context_len).map(|_| rng.gen_range(0..v as u32)).collect(),
            global,
            scale: 1.0 / (1.0 - q),
            length,
            negatives: (0..k)
                .map(|_| loop {
                    let w = rng.gen_range(0..v as u32);
                    if w != target {
                        break w;
                    }
                })
                .collect(),
        }
    }

    pub fn view(&self) -> corruptvec::model::TrainingInstance<'_> {
        corruptvec::model::TrainingInstance {
            target: self.target,
            context: &self.context,
            combiner: corruptvec::model::Combiner::Sum,
            global: Some(corruptvec::model::GlobalContext {
                tokens: &self.global,
                scale: self.scale,
                length: self.length,
            }),
        }
    }

    /// Negative-sampling loss recomputed from scratch.
    pub fn oracle_loss(&self, params: &ModelParams) -> f64 {
        let h = params.dim();
        let mut z = vec![0.0; h];
        for &c in &self.context {
            for k in 0..h {
                z[k] += params.input(c)[k];
            }
        }
        let w = self.scale / self.length as f64;
        for &g in &self.global {
            for k in 0..h {
                z[k] += w * params.input(g)[k];
            }
        }
        let dot = |o: u32| (0..h).map(|k| params.output(o)[k] * z[k]).sum::<f64>();
        let mut loss = -oracle_log_sigmoid(dot(self.target));
        for &n in &self.negatives {
            loss -= oracle_log_sigmoid(-dot(n));
        }
        loss
    }
}

/// Worst normwise relative error between analytic gradients and central
/// differences with step `step`, over every parameter column the instance
/// touches.
pub fn gradient_check(params: &ModelParams, inst: &OwnedInstance, step: f64) -> f64 {
    use std::collections::BTreeSet;
    let grads = corruptvec::model::nll_and_grads(params, &inst.view(), &inst.negatives).unwrap();
    let h = params.dim();
    let inputs: BTreeSet<u32> = inst.context.iter().chain(&inst.global).copied().collect();
    let outputs: BTreeSet<u32> = std::iter::once(inst.target).chain(inst.negatives.iter().copied()).collect();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut p = params.clone();
    for &w in &inputs {
        analytic.extend(grads.input_grad(w));
        for k in 0..h {
            let x = p.input(w)[k];
            p.input_mut(w)[k] = x + step;
            let plus = inst.oracle_loss(&p);
            p.input_mut(w)[k] = x - step;
            let minus = inst.oracle_loss(&p);
            p.input_mut(w)[k] = x;
            numeric.push((plus - minus) / (2.0 * step));
        }
    }
    for &w in &outputs {
        analytic.extend(grads.output_grad(w));
        for k in 0..h {
            let x = p.output(w)[k];
            p.output_mut(w)[k] = x + step;
            let plus = inst.oracle_loss(&p);
            p.output_mut(w)[k] = x - step;
            let minus = inst.oracle_loss(&p);
            p.output_mut(w)[k] = x;
            numeric.push((plus - minus) / (2.0 * step));
        }
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(f64::MIN_POSITIVE)
}

/// Closed-form second derivative checked against a central second difference
/// of [`oracle_f`] in one bag coordinate; returns the relative error. `step`
/// is the size of the move in `x_j / T`, so `z` moves by `step * u_j`.
pub fn hessian_check(params: &ModelParams, inst: &DiagInstance, step: f64) -> f64 {
    let closed = corruptvec::diagnostics::hessian_diagonal(params, inst).unwrap();
    let bag: Vec<(u32, f64)> = inst.bag.iter().map(|&(w, m)| (w, m as f64)).collect();
    let step = step * inst.doc.original_length as f64;
    let mut worst: f64 = 0.0;
    for (i, &(w, h_closed)) in closed.iter().enumerate() {
        assert_eq!(w, bag[i].0);
        let at = |delta: f64| {
            let mut b = bag.clone();
            b[i].1 += delta;
            oracle_f(params, inst, &b)
        };
        // Richardson extrapolation of two central differences
        let d = |s: f64| (at(s) - 2.0 * at(0.0) + at(-s)) / (s * s);
        let fd = (4.0 * d(step / 2.0) - d(step)) / 3.0;
        worst = worst.max(rel_err(h_closed, fd));
    }
    worst
}
