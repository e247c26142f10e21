//! Numerical checks of the second-order view of corruption.
//!
//! With negatives frozen, the per-instance log-likelihood
//! `f(x) = log sigma(v_w . z) + sum_{w'} log sigma(-v_{w'} . z)`, where
//! `z = U c + (1/T) sum_j x_j u_j`, is a deterministic function of the
//! document bag `x`. Its expectation under corruption can be estimated by
//! Monte Carlo, enumerated exactly for short documents, or approximated by
//! `f(x) + 1/2 sum_j Var(x~_j) d2f/dx_j^2`.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{Document, Vocabulary};
use crate::corruption::{corrupt_into, corruption_scale, CorruptedContext};
use crate::error::{Error, Result};
use crate::model::{draw_negatives, log_sigmoid, sigmoid, Combiner, NegSampleTable, ParamStore};
use crate::trainer::window_into;

/// Longest document [`exhaustive_expected_f`] will enumerate.
pub const MAX_EXHAUSTIVE_LENGTH: usize = 12;

/// Fewest samples [`mc_expected_f`] accepts.
pub const MIN_MC_SAMPLES: usize = 1000;

/// A training instance with its negatives drawn once and kept.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagInstance {
    pub target: u32,
    pub context: Vec<u32>,
    pub negatives: Vec<u32>,
    pub combiner: Combiner,
    /// The document supplying the global context.
    pub doc: Document,
    /// Distinct words of `doc` with their multiplicities, ascending by id.
    pub bag: Vec<(u32, u32)>,
}

impl DiagInstance {
    pub fn new(target: u32, context: Vec<u32>, negatives: Vec<u32>, doc: Document) -> Self {
        let bag = multiplicities(&doc.tokens);
        DiagInstance {
            target,
            context,
            negatives,
            combiner: Combiner::Sum,
            doc,
            bag,
        }
    }

    fn length(&self) -> f64 {
        self.doc.original_length as f64
    }

    fn check<P: ParamStore + ?Sized>(&self, params: &P) -> Result<()> {
        let v = params.vocab_size();
        let ok = std::iter::once(&self.target)
            .chain(&self.context)
            .chain(&self.negatives)
            .chain(&self.doc.tokens)
            .all(|&w| (w as usize) < v);
        if !ok {
            return Err(Error::Mismatch("word id outside the model's vocabulary".into()));
        }
        if self.doc.original_length == 0 {
            return Err(Error::EmptyDocument);
        }
        Ok(())
    }

    fn local_hidden<P: ParamStore + ?Sized>(&self, params: &P) -> Vec<f64> {
        let mut z = vec![0.0; params.dim()];
        let weight = match self.combiner {
            Combiner::Sum => 1.0,
            Combiner::Mean => 1.0 / self.context.len().max(1) as f64,
        };
        for &w in &self.context {
            params.accumulate_input(w, weight, &mut z);
        }
        z
    }

    fn outputs(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        std::iter::once((self.target, 1.0)).chain(self.negatives.iter().map(|&w| (w, -1.0)))
    }
}

fn multiplicities(tokens: &[u32]) -> Vec<(u32, u32)> {
    let mut bag: BTreeMap<u32, u32> = BTreeMap::new();
    for &w in tokens {
        *bag.entry(w).or_insert(0) += 1;
    }
    bag.into_iter().collect()
}

fn log_likelihood<P: ParamStore + ?Sized>(params: &P, inst: &DiagInstance, z: &[f64]) -> f64 {
    let mut f = 0.0;
    for (w, sign) in inst.outputs() {
        f += log_sigmoid(sign * params.output_dot(w, z));
    }
    f
}

/// `f` with the global context given as surviving tokens, each weighted
/// `scale / T`.
pub fn f_on_tokens<P: ParamStore + ?Sized>(params: &P, inst: &DiagInstance, tokens: &[u32], scale: f64) -> f64 {
    let mut z = inst.local_hidden(params);
    let weight = scale / inst.length();
    for &w in tokens {
        params.accumulate_input(w, weight, &mut z);
    }
    log_likelihood(params, inst, &z)
}

/// `f` at an arbitrary (possibly fractional) bag `x`.
pub fn f_on_weighted_bag<P: ParamStore + ?Sized>(params: &P, inst: &DiagInstance, bag: &BTreeMap<u32, f64>) -> f64 {
    let mut z = inst.local_hidden(params);
    let t = inst.length();
    for (&w, &x) in bag {
        params.accumulate_input(w, x / t, &mut z);
    }
    log_likelihood(params, inst, &z)
}

/// `f` at the uncorrupted document. Equals the negated training loss of the
/// same instance with nothing dropped.
pub fn exact_f<P: ParamStore + ?Sized>(params: &P, inst: &DiagInstance) -> Result<f64> {
    inst.check(params)?;
    Ok(f_on_tokens(params, inst, &inst.doc.tokens, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte-Carlo estimate of `E[f(x~)]`, one corruption draw per sample.
pub fn mc_expected_f<P: ParamStore + ?Sized, R: Rng + ?Sized>(
    params: &P,
    inst: &DiagInstance,
    q: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    inst.check(params)?;
    if n_samples < MIN_MC_SAMPLES {
        return Err(Error::param("n_samples", n_samples, "need at least 1000 samples"));
    }
    let mut ctx = CorruptedContext::default();
    // Welford, so that identical samples reproduce the value exactly
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 1..=n_samples {
        corrupt_into(&inst.doc.tokens, inst.doc.original_length, q, rng, &mut ctx)?;
        let f = f_on_tokens(params, inst, &ctx.surviving_tokens, ctx.scale);
        let delta = f - mean;
        mean += delta / k as f64;
        m2 += delta * (f - mean);
    }
    let n = n_samples as f64;
    Ok(McEstimate {
        mean,
        std_error: (m2 / (n - 1.0) / n).sqrt(),
        samples: n_samples,
    })
}

/// `E[f(x~)]` summed over all `2^T` drop patterns of the document's tokens.
pub fn exhaustive_expected_f<P: ParamStore + ?Sized>(params: &P, inst: &DiagInstance, q: f64) -> Result<f64> {
    inst.check(params)?;
    let scale = corruption_scale(q)?;
    let t = inst.doc.tokens.len();
    if t > MAX_EXHAUSTIVE_LENGTH {
        return Err(Error::param("document length", t, "exhaustive enumeration is limited to 12 tokens"));
    }
    let mut survivors = Vec::with_capacity(t);
    let mut total = 0.0;
    // mask 0 keeps everything, so at q = 0 the first term is exactly f(x)
    for mask in 0u32..(1 << t) {
        survivors.clear();
        survivors.extend(
            inst.doc
                .tokens
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) == 0)
                .map(|(_, &w)| w),
        );
        let dropped = mask.count_ones() as i32;
        let p = q.powi(dropped) * (1.0 - q).powi(t as i32 - dropped);
        if p == 0.0 {
            continue;
        }
        total += p * f_on_tokens(params, inst, &survivors, scale);
    }
    Ok(total)
}

/// `sum_o sigma_o (1 - sigma_o) (v_o . u_j / T)^2` for every word `j`
/// requested, at the uncorrupted hidden vector. The Hessian diagonal is the
/// negation of this.
fn curvature<P: ParamStore + ?Sized>(params: &P, inst: &DiagInstance, words: &[u32]) -> Vec<f64> {
    let dim = params.dim();
    let t = inst.length();
    let mut z = inst.local_hidden(params);
    for &w in &inst.doc.tokens {
        params.accumulate_input(w, 1.0 / t, &mut z);
    }
    let outputs: Vec<(u32, f64)> = inst
        .outputs()
        .map(|(w, _)| {
            let s = sigmoid(params.output_dot(w, &z));
            (w, s * (1.0 - s))
        })
        .collect();
    let mut u = vec![0.0; dim];
    words
        .iter()
        .map(|&j| {
            u.fill(0.0);
            params.accumulate_input(j, 1.0 / t, &mut u);
            outputs
                .iter()
                .map(|&(o, c)| {
                    let a = params.output_dot(o, &u);
                    c * a * a
                })
                .sum()
        })
        .collect()
}

/// Closed-form `d2f/dx_j^2` at the uncorrupted bag, for each distinct word of
/// the document (ascending ids).
pub fn hessian_diagonal<P: ParamStore + ?Sized>(params: &P, inst: &DiagInstance) -> Result<Vec<(u32, f64)>> {
    inst.check(params)?;
    let words: Vec<u32> = inst.bag.iter().map(|b| b.0).collect();
    Ok(curvature(params, inst, &words).into_iter().map(|c| -c).zip(words).map(|(h, w)| (w, h)).collect())
}

/// Second-order approximation of `E[f(x~)]`. Each occurrence survives
/// independently, so `Var(x~_j) = q / (1 - q) * m_j`.
pub fn taylor_expected_f<P: ParamStore + ?Sized>(params: &P, inst: &DiagInstance, q: f64) -> Result<f64> {
    let f = exact_f(params, inst)?;
    corruption_scale(q)?;
    let coefficient = q / (1.0 - q);
    let hessian = hessian_diagonal(params, inst)?;
    let correction: f64 = inst
        .bag
        .iter()
        .zip(&hessian)
        .map(|(&(_, m), &(_, h))| coefficient * m as f64 * h)
        .sum();
    Ok(f + 0.5 * correction)
}

/// One instance per token position of each document: a window of random
/// radius in `1..=window` and `negatives` draws excluding the target.
pub fn position_instances<R: Rng + ?Sized>(
    docs: &[Document],
    window: usize,
    negatives: usize,
    table: &NegSampleTable,
    rng: &mut R,
) -> Result<Vec<DiagInstance>> {
    if window == 0 {
        return Err(Error::param("window", 0, "must be at least 1"));
    }
    let mut out = Vec::new();
    let mut context = Vec::new();
    for doc in docs {
        let bag = multiplicities(&doc.tokens);
        for (t, &target) in doc.tokens.iter().enumerate() {
            let b = rng.gen_range(1..=window);
            window_into(&doc.tokens, t, b, &mut context);
            let negs = draw_negatives(table, negatives, rng, target)?;
            out.push(DiagInstance {
                target,
                context: context.clone(),
                negatives: negs,
                combiner: Combiner::Sum,
                doc: doc.clone(),
                bag: bag.clone(),
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularizerEntry {
    pub word: String,
    /// Number of instances with this word as target.
    pub count: u64,
    #[serde(rename = "R")]
    pub r: f64,
    /// L2 norm of the input vector.
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularizerReport {
    pub q: f64,
    /// `q / (1 - q)`; the penalty added to the expected loss is
    /// `coefficient / 2 * R(u_j)` per word.
    pub coefficient: f64,
    /// One entry per vocabulary word, by id.
    pub entries: Vec<RegularizerEntry>,
}

/// `R(u_j) = sum_instances m_j [sum_o sigma_o (1 - sigma_o) (v_o . u_j / T)^2]`
/// for every word of `vocab`. Words absent from all documents get 0.
pub fn regularizer<P: ParamStore + Sync + ?Sized>(
    params: &P,
    vocab: &Vocabulary,
    instances: &[DiagInstance],
    q: f64,
) -> Result<RegularizerReport> {
    corruption_scale(q)?;
    let v = params.vocab_size();
    if vocab.words().len() != v {
        return Err(Error::Mismatch(format!(
            "vocabulary has {} words, model has {v}",
            vocab.words().len()
        )));
    }
    for inst in instances {
        inst.check(params)?;
    }
    let per_instance: Vec<Vec<(u32, f64)>> = instances
        .par_iter()
        .map(|inst| {
            let words: Vec<u32> = inst.bag.iter().map(|b| b.0).collect();
            curvature(params, inst, &words)
                .into_iter()
                .zip(&inst.bag)
                .map(|(c, &(w, m))| (w, m as f64 * c))
                .collect()
        })
        .collect();
    let mut r = vec![0.0; v];
    for contributions in &per_instance {
        for &(w, x) in contributions {
            r[w as usize] += x;
        }
    }

    // one instance per token position, so target counts are corpus counts
    let mut counts = vec![0u64; v];
    for inst in instances {
        counts[inst.target as usize] += 1;
    }

    let dim = params.dim();
    let mut u = vec![0.0; dim];
    let entries = (0..v)
        .map(|j| {
            u.fill(0.0);
            params.accumulate_input(j as u32, 1.0, &mut u);
            RegularizerEntry {
                word: vocab.word(j as u32).to_owned(),
                count: counts[j],
                r: r[j],
                norm: u.iter().map(|x| x * x).sum::<f64>().sqrt(),
            }
        })
        .collect();
    Ok(RegularizerReport {
        q,
        coefficient: q / (1.0 - q),
        entries,
    })
}

/// Ranks starting at 1, ties given their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Spearman correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Spearman correlation between each word's count and its `R(u_j)`.
pub fn reg_frequency_correlation(report: &RegularizerReport) -> Result<f64> {
    let counts: Vec<f64> = report.entries.iter().map(|e| e.count as f64).collect();
    let mut distinct: Vec<u64> = report.entries.iter().map(|e| e.count).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::TooFewDistinctCounts(distinct.len()));
    }
    let r: Vec<f64> = report.entries.iter().map(|e| e.r).collect();
    Ok(spearman(&counts, &r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{nll_and_grads, GlobalContext, ModelParams, TrainingInstance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64, v: usize, h: usize) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = (0..v * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let output = (0..v * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ModelParams::from_parts(v, h, input, output).unwrap()
    }

    fn instance() -> DiagInstance {
        DiagInstance::new(2, vec![1, 3], vec![4, 5, 0], Document::new(vec![1, 2, 3, 1, 6]))
    }

    #[test]
    fn zero_model_gives_log_half() {
        let p = ModelParams::zeros(8, 4);
        let f = exact_f(&p, &instance()).unwrap();
        assert!((f - 4.0 * 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn exact_f_is_negated_loss() {
        let p = model(1, 8, 4);
        let inst = instance();
        let grads = nll_and_grads(
            &p,
            &TrainingInstance {
                target: inst.target,
                context: &inst.context,
                combiner: Combiner::Sum,
                global: Some(GlobalContext {
                    tokens: &inst.doc.tokens,
                    scale: 1.0,
                    length: inst.doc.original_length,
                }),
            },
            &inst.negatives,
        )
        .unwrap();
        assert_eq!(exact_f(&p, &inst).unwrap(), -grads.loss);
    }

    #[test]
    fn zero_rate_is_exact_everywhere() {
        let p = model(2, 8, 4);
        let inst = instance();
        let f = exact_f(&p, &inst).unwrap();
        let mc = mc_expected_f(&p, &inst, 0.0, 1000, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(mc.mean, f);
        assert_eq!(mc.std_error, 0.0);
        assert_eq!(taylor_expected_f(&p, &inst, 0.0).unwrap(), f);
        assert_eq!(exhaustive_expected_f(&p, &inst, 0.0).unwrap(), f);
    }

    #[test]
    fn curvature_lowers_the_expectation() {
        let p = model(3, 8, 4);
        let inst = instance();
        let f = exact_f(&p, &inst).unwrap();
        assert!(hessian_diagonal(&p, &inst).unwrap().iter().all(|h| h.1 <= 0.0));
        let t = taylor_expected_f(&p, &inst, 0.9).unwrap();
        assert!(t.is_finite() && t <= f);
    }

    #[test]
    fn limits_are_enforced() {
        let p = model(4, 8, 4);
        let long = DiagInstance::new(0, vec![1], vec![2], Document::new(vec![1; 13]));
        assert!(exhaustive_expected_f(&p, &long, 0.1).is_err());
        assert!(mc_expected_f(&p, &instance(), 0.1, 999, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let bad = DiagInstance::new(0, vec![9], vec![2], Document::new(vec![1]));
        assert!(exact_f(&p, &bad).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
    }
}
