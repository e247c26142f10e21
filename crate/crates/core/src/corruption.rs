//! Unbiased mask-out corruption of a document's bag of words.
//!
//! Every token occurrence is dropped independently with probability `q`;
//! survivors are re-weighted by `1 / (1 - q)` so that the expected weighted
//! bag equals the original one.

use std::collections::BTreeMap;

use rand::Rng;

use crate::corpus::Document;
use crate::error::{Error, Result};

/// The surviving tokens of one corruption draw.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorruptedContext {
    pub surviving_tokens: Vec<u32>,
    /// `1 / (1 - q)`.
    pub scale: f64,
    /// `T` of the source document.
    pub source_length: usize,
}

impl CorruptedContext {
    /// The implied weighted bag: word id to `scale * multiplicity`.
    pub fn weighted_bag(&self) -> BTreeMap<u32, f64> {
        let mut bag = BTreeMap::new();
        for &w in &self.surviving_tokens {
            *bag.entry(w).or_insert(0.0) += self.scale;
        }
        bag
    }
}

pub fn check_rate(q: f64) -> Result<()> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::param("q", q, "corruption rate must lie in [0, 1)"));
    }
    Ok(())
}

/// `1 / (1 - q)` after validating `q`.
pub fn corruption_scale(q: f64) -> Result<f64> {
    check_rate(q)?;
    Ok(1.0 / (1.0 - q))
}

pub fn corrupt<R: Rng + ?Sized>(doc: &Document, q: f64, rng: &mut R) -> Result<CorruptedContext> {
    let mut ctx = CorruptedContext::default();
    corrupt_into(&doc.tokens, doc.original_length, q, rng, &mut ctx)?;
    Ok(ctx)
}

/// Draws a corruption of `tokens` into `out`, reusing its buffer. One
/// uniform draw is consumed per token.
pub fn corrupt_into<R: Rng + ?Sized>(
    tokens: &[u32],
    source_length: usize,
    q: f64,
    rng: &mut R,
    out: &mut CorruptedContext,
) -> Result<()> {
    let scale = corruption_scale(q)?;
    if tokens.is_empty() {
        return Err(Error::EmptyDocument);
    }
    out.surviving_tokens.clear();
    for &w in tokens {
        if rng.gen::<f64>() >= q {
            out.surviving_tokens.push(w);
        }
    }
    out.scale = scale;
    out.source_length = source_length;
    Ok(())
}

/// Mean and diagonal variance of the corrupted bag, per distinct word.
#[derive(Clone, Debug, PartialEq)]
pub struct BagMoments {
    /// Distinct word ids, ascending.
    pub words: Vec<u32>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// First two moments of the corrupted bag.
///
/// The mean is the original multiplicity `x_j`. Since each of the `x_j`
/// occurrences survives independently, the variance is `q / (1 - q) * x_j`,
/// which equals `q / (1 - q) * x_j^2` for words that occur once.
pub fn corruption_moments(doc: &Document, q: f64) -> Result<BagMoments> {
    check_rate(q)?;
    let coefficient = q / (1.0 - q);
    let mut bag: BTreeMap<u32, u32> = BTreeMap::new();
    for &w in &doc.tokens {
        *bag.entry(w).or_insert(0) += 1;
    }
    let words: Vec<u32> = bag.keys().copied().collect();
    let mean: Vec<f64> = bag.values().map(|&m| m as f64).collect();
    let variance = mean.iter().map(|m| coefficient * m).collect();
    Ok(BagMoments {
        words,
        mean,
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_corruption_is_identity() {
        let doc = Document::new(vec![3, 1, 3, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ctx = corrupt(&doc, 0.0, &mut rng).unwrap();
        assert_eq!(ctx.surviving_tokens, doc.tokens);
        assert_eq!(ctx.scale, 1.0);
        assert_eq!(ctx.source_length, 4);
    }

    #[test]
    fn survivor_weight_at_default_rate() {
        let scale = corruption_scale(0.9).unwrap();
        assert!((scale - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rates_and_empty_docs() {
        let doc = Document::new(vec![0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(corrupt(&doc, 1.0, &mut rng).is_err());
        assert!(corrupt(&doc, -0.1, &mut rng).is_err());
        assert!(matches!(
            corrupt(&Document::default(), 0.5, &mut rng),
            Err(Error::EmptyDocument)
        ));
    }

    #[test]
    fn seeded_draws_repeat() {
        let doc = Document::new((0..40).collect());
        let a = corrupt(&doc, 0.7, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = corrupt(&doc, 0.7, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn survivors_are_a_subsequence() {
        let doc = Document::new(vec![4, 4, 1, 0, 4, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let ctx = corrupt(&doc, 0.5, &mut rng).unwrap();
            let mut rest = doc.tokens.iter();
            assert!(ctx.surviving_tokens.iter().all(|w| rest.any(|t| t == w)));
        }
    }

    #[test]
    fn monte_carlo_mean_of_small_bag() {
        // doc = [a, a, b], q = 0.5
        let doc = Document::new(vec![0, 0, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let mut sums = [0.0f64; 2];
        let mut ctx = CorruptedContext::default();
        for _ in 0..draws {
            corrupt_into(&doc.tokens, 3, 0.5, &mut rng, &mut ctx).unwrap();
            for &w in &ctx.surviving_tokens {
                sums[w as usize] += ctx.scale;
            }
        }
        let a = sums[0] / draws as f64;
        let b = sums[1] / draws as f64;
        assert!((a - 2.0).abs() / 2.0 < 0.01, "a {a}");
        assert!((b - 1.0).abs() < 0.01, "b {b}");
    }

    #[test]
    fn moments_closed_form() {
        let doc = Document::new(vec![7, 2, 7]);
        let m = corruption_moments(&doc, 0.0).unwrap();
        assert_eq!(m.words, [2, 7]);
        assert_eq!(m.mean, [1.0, 2.0]);
        assert_eq!(m.variance, [0.0, 0.0]);

        let m = corruption_moments(&Document::new(vec![3]), 0.5).unwrap();
        assert_eq!(m.variance, [1.0]);
    }

    #[test]
    fn empirical_variance_matches_diagonal() {
        let doc = Document::new(vec![0, 1, 1, 2, 2, 2]);
        let q = 0.3;
        let moments = corruption_moments(&doc, q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let draws = 1_000_000;
        let mut sum = [0.0f64; 3];
        let mut sum_sq = [0.0f64; 3];
        let mut ctx = CorruptedContext::default();
        for _ in 0..draws {
            corrupt_into(&doc.tokens, doc.len(), q, &mut rng, &mut ctx).unwrap();
            let mut bag = [0.0f64; 3];
            for &w in &ctx.surviving_tokens {
                bag[w as usize] += ctx.scale;
            }
            for j in 0..3 {
                sum[j] += bag[j];
                sum_sq[j] += bag[j] * bag[j];
            }
        }
        for j in 0..3 {
            let mean = sum[j] / draws as f64;
            let var = sum_sq[j] / draws as f64 - mean * mean;
            let expected = moments.variance[j];
            assert!((var - expected).abs() / expected < 0.02, "word {j}: {var} vs {expected}");
        }
    }

    #[test]
    fn survivor_count_is_binomial() {
        use statrs::distribution::{ChiSquared, ContinuousCDF, Binomial, Discrete};

        let t = 12u64;
        let q = 0.6;
        let doc = Document::new((0..t as u32).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let draws = 50_000;
        let mut hist = vec![0u64; t as usize + 1];
        for _ in 0..draws {
            hist[corrupt(&doc, q, &mut rng).unwrap().surviving_tokens.len()] += 1;
        }
        let binom = Binomial::new(1.0 - q, t).unwrap();
        // pool sparse tails so every cell expects at least 5
        let mut stat = 0.0;
        let mut cells = 0;
        let (mut obs, mut exp) = (0.0, 0.0);
        for (k, &h) in hist.iter().enumerate() {
            obs += h as f64;
            exp += binom.pmf(k as u64) * draws as f64;
            if exp >= 5.0 {
                stat += (obs - exp).powi(2) / exp;
                cells += 1;
                obs = 0.0;
                exp = 0.0;
            }
        }
        if exp > 0.0 {
            stat += (obs - exp).powi(2) / exp;
            cells += 1;
        }
        let p = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
        assert!(p > 1e-3, "chi-square {stat} on {cells} cells, p = {p}");
    }
}
