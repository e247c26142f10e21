//! Corpus streaming, vocabulary construction, document encoding and
//! frequent-word subsampling.
//!
//! A corpus file holds one document per line, tokens separated by ASCII
//! whitespace. Tokens are taken verbatim: no case folding or punctuation
//! handling happens here.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

/// Anything that maps a surface token to a dense word id.
pub trait Lexicon {
    fn word_id(&self, word: &str) -> Option<u32>;
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Word/id map with corpus counts.
///
/// Ids are dense and ordered by descending count (ties broken
/// lexicographically), so id 0 is the most frequent word and the first `n`
/// ids are the `n` most frequent words.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    total_tokens: u64,
    min_count: u64,
}

impl Vocabulary {
    /// Builds a vocabulary from (word, count) pairs, keeping those with
    /// `count >= min_count`.
    pub fn from_counts<I, S>(counts: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        if min_count == 0 {
            return Err(Error::param("min_count", 0, "must be at least 1"));
        }
        let mut entries: Vec<(String, u64)> = counts
            .into_iter()
            .map(|(w, c)| (w.into(), c))
            .filter(|(_, c)| *c >= min_count)
            .collect();
        if entries.is_empty() {
            return Err(Error::NoSurvivingWords { min_count });
        }
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut index = HashMap::with_capacity(entries.len());
        let mut words = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        for (id, (word, count)) in entries.into_iter().enumerate() {
            if index.insert(word.clone(), id as u32).is_some() {
                return Err(Error::Mismatch(format!("duplicate word {word:?}")));
            }
            words.push(word);
            counts.push(count);
        }
        let total_tokens = counts.iter().sum();
        Ok(Vocabulary {
            words,
            counts,
            index,
            total_tokens,
            min_count,
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Relative corpus frequency `count / total_tokens`.
    pub fn frequency(&self, id: u32) -> f64 {
        self.counts[id as usize] as f64 / self.total_tokens as f64
    }

    /// Per-word discard probability `max(0, 1 - sqrt(t / f_w))`.
    pub fn discard_probabilities(&self, threshold: f64) -> Vec<f64> {
        (0..self.words.len() as u32)
            .map(|id| discard_probability(self.frequency(id), threshold))
            .collect()
    }

    /// Writes one `word<TAB>count` line per word, most frequent first.
    pub fn write_dump<W: Write>(&self, mut writer: W) -> Result<()> {
        for (word, count) in self.words.iter().zip(&self.counts) {
            writeln!(writer, "{word}\t{count}")?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn save_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_dump(BufWriter::new(File::create(path)?))
    }

    /// Reads a dump written by [`Vocabulary::save_dump`]. The cutoff of the
    /// loaded vocabulary is its smallest count.
    pub fn load_dump(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        let mut seen = HashMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, lineno, "expected word<TAB>count"))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|e| Error::parse(path, lineno, format!("bad count: {e}")))?;
            if count == 0 {
                return Err(Error::parse(path, lineno, "count must be positive"));
            }
            if seen.insert(word.to_owned(), lineno).is_some() {
                return Err(Error::parse(path, lineno, format!("duplicate word {word:?}")));
            }
            entries.push((word.to_owned(), count));
        }
        let min_count = entries.iter().map(|e| e.1).min().ok_or(Error::EmptyCorpus)?;
        Vocabulary::from_counts(entries, min_count)
    }
}

impl Lexicon for Vocabulary {
    fn word_id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    fn len(&self) -> usize {
        self.words.len()
    }
}

/// Counts tokens and applies the frequency cutoff.
pub fn build_vocab<I, S>(tokens: I, min_count: u64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if min_count == 0 {
        return Err(Error::param("min_count", 0, "must be at least 1"));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut seen_any = false;
    for token in tokens {
        seen_any = true;
        let token = token.as_ref();
        match counts.get_mut(token) {
            Some(c) => *c += 1,
            None => {
                counts.insert(token.to_owned(), 1);
            }
        }
    }
    if !seen_any {
        return Err(Error::EmptyCorpus);
    }
    Vocabulary::from_counts(counts, min_count)
}

/// A document as a sequence of word ids.
///
/// `original_length` is the in-vocabulary token count before subsampling; it
/// is the `T` used to scale the global context and the document average.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Document {
    pub tokens: Vec<u32>,
    pub original_length: usize,
}

impl Document {
    pub fn new(tokens: Vec<u32>) -> Self {
        let original_length = tokens.len();
        Document {
            tokens,
            original_length,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Encodes a whitespace-tokenized line, dropping out-of-vocabulary tokens.
pub fn encode<L: Lexicon + ?Sized>(line: &str, lexicon: &L) -> Document {
    let tokens = line
        .split_ascii_whitespace()
        .filter_map(|t| lexicon.word_id(t))
        .collect();
    Document::new(tokens)
}

/// `max(0, 1 - sqrt(t / f))`. A non-positive threshold disables subsampling.
pub fn discard_probability(frequency: f64, threshold: f64) -> f64 {
    if frequency <= 0.0 || threshold <= 0.0 {
        return 0.0;
    }
    (1.0 - (threshold / frequency).sqrt()).max(0.0)
}

/// Randomly discards tokens of frequent words. `original_length` is kept.
pub fn subsample<R: Rng + ?Sized>(
    doc: &Document,
    vocab: &Vocabulary,
    threshold: f64,
    rng: &mut R,
) -> Document {
    let probs = vocab.discard_probabilities(threshold);
    subsample_with(doc, &probs, rng)
}

/// Subsampling against precomputed per-word discard probabilities. A random
/// number is drawn only for tokens whose discard probability is positive.
pub fn subsample_with<R: Rng + ?Sized>(doc: &Document, discard: &[f64], rng: &mut R) -> Document {
    let mut tokens = Vec::with_capacity(doc.tokens.len());
    subsample_into(doc, discard, rng, &mut tokens);
    Document {
        tokens,
        original_length: doc.original_length,
    }
}

pub(crate) fn subsample_into<R: Rng + ?Sized>(
    doc: &Document,
    discard: &[f64],
    rng: &mut R,
    out: &mut Vec<u32>,
) {
    out.clear();
    for &w in &doc.tokens {
        let p = discard[w as usize];
        if p > 0.0 && rng.gen::<f64>() < p {
            continue;
        }
        out.push(w);
    }
}

/// Calls `f` with each line of a UTF-8 corpus file.
pub fn for_each_line<P, F>(path: P, mut f: F) -> Result<usize>
where
    P: AsRef<Path>,
    F: FnMut(&str) -> Result<()>,
{
    let path = path.as_ref();
    let mut reader = BufReader::with_capacity(1 << 20, File::open(path)?);
    let mut buf = Vec::new();
    let mut lineno = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        lineno += 1;
        let line = std::str::from_utf8(&buf)
            .map_err(|e| Error::parse(path, lineno, format!("invalid UTF-8: {e}")))?;
        f(line.trim_end_matches(['\n', '\r']))?;
    }
    Ok(lineno)
}

/// Builds the vocabulary of a corpus file.
pub fn vocab_from_file(path: impl AsRef<Path>, min_count: u64) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::param("min_count", 0, "must be at least 1"));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut seen_any = false;
    for_each_line(path, |line| {
        for token in line.split_ascii_whitespace() {
            seen_any = true;
            match counts.get_mut(token) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(token.to_owned(), 1);
                }
            }
        }
        Ok(())
    })?;
    if !seen_any {
        return Err(Error::EmptyCorpus);
    }
    Vocabulary::from_counts(counts, min_count)
}

/// Encodes every line of a corpus file, one document per line.
pub fn read_documents<L: Lexicon + ?Sized>(path: impl AsRef<Path>, lexicon: &L) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for_each_line(path, |line| {
        docs.push(encode(line, lexicon));
        Ok(())
    })?;
    Ok(docs)
}
