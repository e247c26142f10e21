use serde::Serialize;

use crate::corpus::{Lexicon, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::analogy::normalized_rows;
use crate::inference::{Embeddings, WordVectors};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Neighbor {
    pub word: String,
    pub cosine: f64,
}

/// The `n` words most cosine-similar to `word`, excluding itself.
pub fn nearest_neighbors(vectors: &Embeddings, word: &str, n: usize) -> Result<Vec<Neighbor>> {
    if n == 0 {
        return Err(Error::param("n", 0, "must be at least 1"));
    }
    let query = vectors.word_id(word).ok_or_else(|| Error::UnknownWord(word.to_owned()))?;
    let v = vectors.len();
    let dim = vectors.dim();
    let unit = normalized_rows(vectors, v);
    let row = |id: usize| &unit[id * dim..(id + 1) * dim];
    let q = row(query as usize);
    let mut scored: Vec<(usize, f64)> = (0..v)
        .filter(|&j| j != query as usize)
        .map(|j| (j, row(j).iter().zip(q).map(|(a, b)| a * b).sum()))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(n);
    Ok(scored
        .into_iter()
        .map(|(j, cosine)| Neighbor {
            word: vectors.word(j as u32).to_owned(),
            cosine,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormEntry {
    pub word: String,
    pub norm: f64,
    /// Training count, when the word is in the supplied vocabulary.
    pub count: Option<u64>,
}

/// The `bottom_n` words with the smallest input-vector L2 norm, ascending.
pub fn norm_report(vectors: &Embeddings, vocab: &Vocabulary, bottom_n: usize) -> Vec<NormEntry> {
    let mut norms: Vec<(usize, f64)> = (0..vectors.len())
        .map(|j| (j, vectors.vector(j as u32).iter().map(|x| x * x).sum::<f64>().sqrt()))
        .collect();
    norms.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    norms
        .into_iter()
        .take(bottom_n)
        .map(|(j, norm)| {
            let word = vectors.word(j as u32);
            NormEntry {
                word: word.to_owned(),
                norm,
                count: vocab.word_id(word).map(|id| vocab.count(id)),
            }
        })
        .collect()
}
