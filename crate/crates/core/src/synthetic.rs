//! Seeded synthetic corpora for tests and demos.

use std::io::Write;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::Result;

/// Documents drawn iid from a Zipf law over `vocab` words named `w0, w1, ...`
/// (`w0` most likely).
pub fn zipf_corpus<R: Rng + ?Sized>(docs: usize, doc_len: usize, vocab: usize, exponent: f64, rng: &mut R) -> Vec<String> {
    let weights: Vec<f64> = (1..=vocab).map(|r| (r as f64).powf(-exponent)).collect();
    let dist = WeightedIndex::new(&weights).expect("positive weights");
    (0..docs)
        .map(|_| {
            (0..doc_len)
                .map(|_| format!("w{}", dist.sample(rng)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Shape of a [`topic_corpus`].
#[derive(Clone, Debug, PartialEq)]
pub struct TopicSpec {
    pub topics: usize,
    pub words_per_topic: usize,
    /// Function words shared by every topic (`s0, s1, ...`).
    pub stop_words: usize,
    /// Fraction of tokens that are stop words.
    pub stop_fraction: f64,
    pub docs: usize,
    pub doc_len: usize,
}

impl Default for TopicSpec {
    fn default() -> Self {
        TopicSpec {
            topics: 4,
            words_per_topic: 30,
            stop_words: 10,
            stop_fraction: 0.4,
            docs: 400,
            doc_len: 60,
        }
    }
}

/// Documents that each pick one topic and mix its words (`t{topic}_{i}`,
/// Zipf-weighted within the topic) with topic-independent stop words.
/// Returns the lines and each line's topic.
pub fn topic_corpus<R: Rng + ?Sized>(spec: &TopicSpec, rng: &mut R) -> (Vec<String>, Vec<i64>) {
    let topic_weights: Vec<f64> = (1..=spec.words_per_topic).map(|r| 1.0 / r as f64).collect();
    let topic_dist = WeightedIndex::new(&topic_weights).expect("positive weights");
    let stop_weights: Vec<f64> = (1..=spec.stop_words.max(1)).map(|r| 1.0 / r as f64).collect();
    let stop_dist = WeightedIndex::new(&stop_weights).expect("positive weights");
    let mut lines = Vec::with_capacity(spec.docs);
    let mut labels = Vec::with_capacity(spec.docs);
    for _ in 0..spec.docs {
        let topic = rng.gen_range(0..spec.topics);
        let words: Vec<String> = (0..spec.doc_len)
            .map(|_| {
                if spec.stop_words > 0 && rng.gen::<f64>() < spec.stop_fraction {
                    format!("s{}", stop_dist.sample(rng))
                } else {
                    format!("t{topic}_{}", topic_dist.sample(rng))
                }
            })
            .collect();
        lines.push(words.join(" "));
        labels.push(topic as i64);
    }
    (lines, labels)
}

pub fn write_lines(lines: &[String], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in lines {
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}
