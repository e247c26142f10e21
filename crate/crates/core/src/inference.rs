//! Document vectors as plain averages of input word vectors, and the word
//! vector / model file formats.
//!
//! # Text word-vector format
//!
//! ```text
//! <v> <h>
//! <word> <f_1> ... <f_h>      (v lines, fixed-point with 6 decimals)
//! ```
//!
//! # Binary word-vector format (little endian)
//!
//! ```text
//! b"CVEC"  u32 version (=1)  u64 v  u64 h
//! v times: u32 byte length, UTF-8 word bytes, h x f32
//! ```
//!
//! # Binary model checkpoint (little endian)
//!
//! ```text
//! b"CVMD"  u32 version (=1)  u64 v  u64 h
//! v times: u32 byte length, UTF-8 word bytes, u64 count
//! v*h x f64 input matrix (word-major), v*h x f64 output matrix
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::corpus::{self, Document, Lexicon, Vocabulary};
use crate::error::{Error, Result};
use crate::model::ModelParams;

const VECTORS_MAGIC: &[u8; 4] = b"CVEC";
const MODEL_MAGIC: &[u8; 4] = b"CVMD";
const FORMAT_VERSION: u32 = 1;

/// Read access to per-word input vectors.
pub trait WordVectors {
    fn dim(&self) -> usize;
    fn vector(&self, word: u32) -> &[f64];
}

impl WordVectors for ModelParams {
    fn dim(&self) -> usize {
        ModelParams::dim(self)
    }

    fn vector(&self, word: u32) -> &[f64] {
        self.input(word)
    }
}

/// Word vectors detached from a model, e.g. loaded from disk. Row order is
/// the file order, which for files written here is descending frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    words: Vec<String>,
    index: HashMap<String, u32>,
    dim: usize,
    data: Vec<f64>,
}

impl Embeddings {
    pub fn new(words: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != words.len() * dim {
            return Err(Error::Mismatch(format!(
                "{} words of dimension {dim} need {} values, got {}",
                words.len(),
                words.len() * dim,
                data.len()
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::Mismatch(format!("duplicate word {w:?}")));
            }
        }
        Ok(Embeddings {
            words,
            index,
            dim,
            data,
        })
    }

    /// Input vectors of a trained model.
    pub fn from_model(params: &ModelParams, vocab: &Vocabulary) -> Self {
        Embeddings::new(vocab.words().to_vec(), params.dim(), params.input_matrix().to_vec())
            .expect("model and vocabulary agree")
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Multiplies every vector by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= factor);
        out
    }
}

impl Lexicon for Embeddings {
    fn word_id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    fn len(&self) -> usize {
        self.words.len()
    }
}

impl WordVectors for Embeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vector(&self, word: u32) -> &[f64] {
        let start = word as usize * self.dim;
        &self.data[start..start + self.dim]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DocVector {
    pub values: Vec<f64>,
    pub source_length: usize,
}

/// `d = (1/T) sum_{w in D} u_w`, with `T` the number of tokens.
///
/// Tokens are grouped by word id before summing, so the result depends only
/// on the bag of words and not on token order.
pub fn embed_document<E: WordVectors + ?Sized>(vectors: &E, doc: &Document) -> Result<DocVector> {
    if doc.tokens.is_empty() {
        return Err(Error::EmptyEmbedding);
    }
    let mut bag: BTreeMap<u32, u32> = BTreeMap::new();
    for &w in &doc.tokens {
        *bag.entry(w).or_insert(0) += 1;
    }
    let mut values = vec![0.0; vectors.dim()];
    for (&w, &m) in &bag {
        let m = m as f64;
        for (d, u) in values.iter_mut().zip(vectors.vector(w)) {
            *d += m * u;
        }
    }
    let t = doc.tokens.len() as f64;
    values.iter_mut().for_each(|d| *d /= t);
    Ok(DocVector {
        values,
        source_length: doc.tokens.len(),
    })
}

fn write_row<W: Write>(out: &mut W, values: &[f64]) -> std::io::Result<()> {
    for (i, x) in values.iter().enumerate() {
        if i > 0 {
            out.write_all(b" ")?;
        }
        write!(out, "{x:.6}")?;
    }
    out.write_all(b"\n")
}

/// Writes the text format: header `v h`, then `word f_1 ... f_h` per line.
pub fn save_word_vectors<E: WordVectors + ?Sized>(vectors: &E, words: &[String], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {}", words.len(), vectors.dim())?;
    for (id, word) in words.iter().enumerate() {
        out.write_all(word.as_bytes())?;
        out.write_all(b" ")?;
        write_row(&mut out, vectors.vector(id as u32))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the text format.
pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<Embeddings> {
    let path = path.as_ref();
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().transpose()?.ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let mut fields = header.split_ascii_whitespace();
    let (v, h) = match (fields.next(), fields.next(), fields.next()) {
        (Some(v), Some(h), None) => match (v.parse::<usize>(), h.parse::<usize>()) {
            (Ok(v), Ok(h)) if h > 0 => (v, h),
            _ => return Err(Error::parse(path, 1, format!("malformed header {header:?}"))),
        },
        _ => return Err(Error::parse(path, 1, format!("malformed header {header:?}"))),
    };

    let mut words = Vec::with_capacity(v);
    let mut seen: HashMap<String, usize> = HashMap::with_capacity(v);
    let mut data = Vec::with_capacity(v * h);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if words.len() == v {
            return Err(Error::parse(path, lineno, format!("more than {v} rows")));
        }
        let mut fields = line.split_ascii_whitespace();
        let word = fields.next().expect("line is not blank");
        let before = data.len();
        for f in fields {
            let x: f64 = f
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad number {f:?}")))?;
            data.push(x);
        }
        let got = data.len() - before;
        if got != h {
            return Err(Error::parse(path, lineno, format!("expected {h} values, found {got}")));
        }
        if let Some(first) = seen.insert(word.to_owned(), lineno) {
            return Err(Error::parse(path, lineno, format!("duplicate word {word:?} (first on line {first})")));
        }
        words.push(word.to_owned());
    }
    if words.len() != v {
        return Err(Error::parse(
            path,
            words.len() + 2,
            format!("header promises {v} rows, found {}", words.len()),
        ));
    }
    Embeddings::new(words, h, data)
}

fn write_word<W: Write>(out: &mut W, word: &str) -> std::io::Result<()> {
    out.write_u32::<LittleEndian>(word.len() as u32)?;
    out.write_all(word.as_bytes())
}

fn read_word<R: Read>(input: &mut R, path: &Path, row: usize) -> Result<String> {
    let len = input.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::parse(path, row, "word is not UTF-8"))
}

fn read_header<R: Read>(input: &mut R, magic: &[u8; 4], path: &Path) -> Result<(usize, usize)> {
    let mut got = [0u8; 4];
    input.read_exact(&mut got)?;
    if &got != magic {
        return Err(Error::parse(path, 0, format!("bad magic {got:?}")));
    }
    let version = input.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::parse(path, 0, format!("unsupported version {version}")));
    }
    let v = input.read_u64::<LittleEndian>()? as usize;
    let h = input.read_u64::<LittleEndian>()? as usize;
    Ok((v, h))
}

/// Binary word vectors, stored as `f32`.
pub fn save_word_vectors_binary<E: WordVectors + ?Sized>(
    vectors: &E,
    words: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(VECTORS_MAGIC)?;
    out.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    out.write_u64::<LittleEndian>(words.len() as u64)?;
    out.write_u64::<LittleEndian>(vectors.dim() as u64)?;
    for (id, word) in words.iter().enumerate() {
        write_word(&mut out, word)?;
        for &x in vectors.vector(id as u32) {
            out.write_f32::<LittleEndian>(x as f32)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_word_vectors_binary(path: impl AsRef<Path>) -> Result<Embeddings> {
    let path = path.as_ref();
    let mut input = BufReader::new(File::open(path)?);
    let (v, h) = read_header(&mut input, VECTORS_MAGIC, path)?;
    let mut words = Vec::with_capacity(v);
    let mut data = Vec::with_capacity(v * h);
    for row in 0..v {
        words.push(read_word(&mut input, path, row + 1)?);
        for _ in 0..h {
            data.push(input.read_f32::<LittleEndian>()? as f64);
        }
    }
    Embeddings::new(words, h, data)
}

/// Loads either word-vector format, sniffing the binary magic.
pub fn load_any_word_vectors(path: impl AsRef<Path>) -> Result<Embeddings> {
    let path = path.as_ref();
    let mut magic = [0u8; 4];
    let n = File::open(path)?.read(&mut magic)?;
    if n == 4 && &magic == VECTORS_MAGIC {
        load_word_vectors_binary(path)
    } else {
        load_word_vectors(path)
    }
}

/// Full checkpoint: vocabulary with counts plus both matrices at full
/// precision.
pub fn save_model(params: &ModelParams, vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MODEL_MAGIC)?;
    out.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    out.write_u64::<LittleEndian>(vocab.len() as u64)?;
    out.write_u64::<LittleEndian>(params.dim() as u64)?;
    for (word, &count) in vocab.words().iter().zip(vocab.counts()) {
        write_word(&mut out, word)?;
        out.write_u64::<LittleEndian>(count)?;
    }
    for &x in params.input_matrix().iter().chain(params.output_matrix()) {
        out.write_f64::<LittleEndian>(x)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelParams, Vocabulary)> {
    let path = path.as_ref();
    let mut input = BufReader::new(File::open(path)?);
    let (v, h) = read_header(&mut input, MODEL_MAGIC, path)?;
    let mut entries = Vec::with_capacity(v);
    for row in 0..v {
        let word = read_word(&mut input, path, row + 1)?;
        entries.push((word, input.read_u64::<LittleEndian>()?));
    }
    let min_count = entries.iter().map(|e| e.1).min().unwrap_or(1).max(1);
    let vocab = Vocabulary::from_counts(entries.iter().cloned(), min_count)?;
    if vocab.words().iter().zip(&entries).any(|(a, b)| *a != b.0) {
        return Err(Error::parse(path, 0, "vocabulary is not in canonical order"));
    }
    let mut read_matrix = || -> Result<Vec<f64>> {
        let mut m = vec![0.0; v * h];
        input.read_f64_into::<LittleEndian>(&mut m)?;
        Ok(m)
    };
    let u = read_matrix()?;
    let o = read_matrix()?;
    Ok((ModelParams::from_parts(v, h, u, o)?, vocab))
}

const EMBED_CHUNK: usize = 4096;

/// Embeds every line of `corpus_path` into `out_path`, one row per line.
/// Lines without in-vocabulary tokens produce a zero row and a warning.
/// Returns the number of rows written.
pub fn embed_corpus<E>(vectors: &E, corpus_path: impl AsRef<Path>, out_path: impl AsRef<Path>) -> Result<usize>
where
    E: WordVectors + Lexicon + Sync,
{
    let mut out = BufWriter::new(File::create(out_path)?);
    let mut pending: Vec<String> = Vec::with_capacity(EMBED_CHUNK);
    let mut written = 0usize;
    let flush = |pending: &mut Vec<String>, written: &mut usize, out: &mut BufWriter<File>| -> Result<()> {
        let rows: Vec<Option<Vec<f64>>> = pending
            .par_iter()
            .map(|line| {
                let doc = corpus::encode(line, vectors);
                embed_document(vectors, &doc).ok().map(|d| d.values)
            })
            .collect();
        for row in rows {
            *written += 1;
            match row {
                Some(values) => write_row(out, &values)?,
                None => {
                    log::warn!("line {}: no in-vocabulary tokens, writing zeros", *written);
                    write_row(out, &vec![0.0; vectors.dim()])?;
                }
            }
        }
        pending.clear();
        Ok(())
    };
    corpus::for_each_line(corpus_path, |line| {
        pending.push(line.to_owned());
        if pending.len() == EMBED_CHUNK {
            flush(&mut pending, &mut written, &mut out)?;
        }
        Ok(())
    })?;
    flush(&mut pending, &mut written, &mut out)?;
    out.flush()?;
    Ok(written)
}
