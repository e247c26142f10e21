//! Word analogy questions scored with 3CosAdd.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{Embeddings, WordVectors};

pub const SEMANTIC_CATEGORIES: [&str; 5] = [
    "capital-common-countries",
    "capital-world",
    "currency",
    "city-in-state",
    "family",
];

pub const SYNTACTIC_CATEGORIES: [&str; 9] = [
    "gram1-adjective-to-adverb",
    "gram2-opposite",
    "gram3-comparative",
    "gram4-superlative",
    "gram5-present-participle",
    "gram6-nationality-adjective",
    "gram7-past-tense",
    "gram8-plural",
    "gram9-plural-verbs",
];

pub fn is_known_category(name: &str) -> bool {
    SEMANTIC_CATEGORIES.contains(&name) || SYNTACTIC_CATEGORIES.contains(&name)
}

/// "a is to b as c is to d", lowercased.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalogyQuestion {
    pub a: String,
    pub b: String,
    pub c: String,
    pub d: String,
    pub category: String,
}

/// Parses the usual question file: `: category` headers followed by lines of
/// four words.
pub fn parse_questions(text: &str, path: &Path) -> Result<Vec<AnalogyQuestion>> {
    let mut category: Option<String> = None;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix(':') {
            let name = name.trim();
            if !is_known_category(name) {
                return Err(Error::parse(path, lineno, format!("unknown category {name:?}")));
            }
            category = Some(name.to_owned());
            continue;
        }
        let category = category
            .clone()
            .ok_or_else(|| Error::parse(path, lineno, "question before the first category header"))?;
        let words: Vec<String> = line.split_ascii_whitespace().map(str::to_lowercase).collect();
        let [a, b, c, d]: [String; 4] = words
            .try_into()
            .map_err(|w: Vec<String>| Error::parse(path, lineno, format!("expected 4 words, found {}", w.len())))?;
        out.push(AnalogyQuestion { a, b, c, d, category });
    }
    Ok(out)
}

pub fn load_questions(path: impl AsRef<Path>) -> Result<Vec<AnalogyQuestion>> {
    let path = path.as_ref();
    parse_questions(&std::fs::read_to_string(path)?, path)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CategoryScore {
    pub category: String,
    pub correct: usize,
    pub scored: usize,
    pub skipped: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AnalogyReport {
    pub restrict_top: usize,
    pub categories: Vec<CategoryScore>,
    pub correct: usize,
    pub scored: usize,
    pub skipped: usize,
    pub total: usize,
    pub accuracy: f64,
    pub semantic_accuracy: f64,
    pub syntactic_accuracy: f64,
}

impl AnalogyReport {
    pub fn category(&self, name: &str) -> Option<&CategoryScore> {
        self.categories.iter().find(|c| c.category == name)
    }
}

fn ratio(correct: usize, scored: usize) -> f64 {
    if scored == 0 {
        0.0
    } else {
        correct as f64 / scored as f64
    }
}

/// Unit-length copies of the first `n` vectors (zero vectors stay zero).
pub(crate) fn normalized_rows<E: WordVectors + ?Sized>(vectors: &E, n: usize) -> Vec<f64> {
    let dim = vectors.dim();
    let mut out = Vec::with_capacity(n * dim);
    for id in 0..n as u32 {
        let v = vectors.vector(id);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.extend(v.iter().map(|x| x / norm));
        } else {
            out.extend(std::iter::repeat(0.0).take(dim));
        }
    }
    out
}

/// Answers `b - a + c` by the most cosine-similar word among the `restrict_top`
/// most frequent words, excluding the three query words. Questions with a
/// word outside that set are skipped.
pub fn analogy_eval(vectors: &Embeddings, questions: &[AnalogyQuestion], restrict_top: usize) -> AnalogyReport {
    let n = restrict_top.min(vectors.words().len());
    let dim = vectors.dim();
    let unit = normalized_rows(vectors, n);

    // lowercased lookup; the most frequent spelling wins
    let mut lookup: HashMap<String, u32> = HashMap::with_capacity(n);
    for (id, w) in vectors.words()[..n].iter().enumerate() {
        lookup.entry(w.to_lowercase()).or_insert(id as u32);
    }

    let outcomes: Vec<Option<bool>> = questions
        .par_iter()
        .map(|q| {
            let ids = [&q.a, &q.b, &q.c, &q.d].map(|w| lookup.get(w.as_str()).copied());
            let [Some(a), Some(b), Some(c), Some(d)] = ids else {
                return None;
            };
            let row = |id: u32| &unit[id as usize * dim..(id as usize + 1) * dim];
            let target: Vec<f64> = (0..dim).map(|k| row(b)[k] - row(a)[k] + row(c)[k]).collect();
            let mut best: Option<(u32, f64)> = None;
            for j in 0..n as u32 {
                if j == a || j == b || j == c {
                    continue;
                }
                let s: f64 = row(j).iter().zip(&target).map(|(x, y)| x * y).sum();
                if best.map_or(true, |(_, bs)| s > bs) {
                    best = Some((j, s));
                }
            }
            Some(best.map_or(false, |(j, _)| j == d))
        })
        .collect();

    let mut per: BTreeMap<&str, CategoryScore> = BTreeMap::new();
    for (q, outcome) in questions.iter().zip(&outcomes) {
        let entry = per.entry(q.category.as_str()).or_insert_with(|| CategoryScore {
            category: q.category.clone(),
            ..Default::default()
        });
        match outcome {
            None => entry.skipped += 1,
            Some(ok) => {
                entry.scored += 1;
                entry.correct += *ok as usize;
            }
        }
    }

    let order = SEMANTIC_CATEGORIES.iter().chain(&SYNTACTIC_CATEGORIES);
    let mut report = AnalogyReport {
        restrict_top,
        total: questions.len(),
        ..Default::default()
    };
    let (mut sem, mut syn) = ((0, 0), (0, 0));
    for name in order {
        if let Some(mut score) = per.remove(*name) {
            score.accuracy = ratio(score.correct, score.scored);
            report.correct += score.correct;
            report.scored += score.scored;
            report.skipped += score.skipped;
            let bucket = if SEMANTIC_CATEGORIES.contains(name) { &mut sem } else { &mut syn };
            bucket.0 += score.correct;
            bucket.1 += score.scored;
            report.categories.push(score);
        }
    }
    report.accuracy = ratio(report.correct, report.scored);
    report.semantic_accuracy = ratio(sem.0, sem.1);
    report.syntactic_accuracy = ratio(syn.0, syn.1);
    report
}
