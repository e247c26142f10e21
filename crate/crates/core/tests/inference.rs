mod common;

use common::rng;
use corruptvec::corpus::Document;
use corruptvec::inference::{
    embed_document, load_any_word_vectors, load_model, load_word_vectors, save_model, save_word_vectors,
    save_word_vectors_binary, Embeddings, WordVectors,
};
use corruptvec::Error;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_vectors(r: &mut impl Rng, v: usize, h: usize) -> Embeddings {
    let words = (0..v).map(|i| format!("w{i}")).collect();
    Embeddings::new(words, h, (0..v * h).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Multiples of 1/64 in [-2, 2]; sums of a few hundred of them stay exact.
fn dyadic_vectors(r: &mut impl Rng, v: usize, h: usize) -> Embeddings {
    let words = (0..v).map(|i| format!("w{i}")).collect();
    Embeddings::new(words, h, (0..v * h).map(|_| r.gen_range(-128..=128) as f64 / 64.0).collect()).unwrap()
}

#[test]
fn single_token_embeds_to_its_vector() {
    let e = random_vectors(&mut rng(1), 30, 7);
    for w in 0..30 {
        let d = embed_document(&e, &Document::new(vec![w])).unwrap();
        assert_eq!(d.values, e.vector(w));
    }
}

#[test]
fn embedding_ignores_token_order() {
    let mut r = rng(2);
    let e = random_vectors(&mut r, 30, 7);
    for _ in 0..50 {
        let mut tokens: Vec<u32> = (0..r.gen_range(1..40)).map(|_| r.gen_range(0..30)).collect();
        let a = embed_document(&e, &Document::new(tokens.clone())).unwrap();
        tokens.shuffle(&mut r);
        let b = embed_document(&e, &Document::new(tokens)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn concatenation_is_a_length_weighted_average() {
    let mut r = rng(3);
    let dyadic = dyadic_vectors(&mut r, 20, 5);
    let real = random_vectors(&mut r, 20, 5);
    for _ in 0..50 {
        // lengths that are powers of two keep the divisions exact
        let la = 1 << r.gen_range(0..5);
        let lb = 1 << r.gen_range(0..5);
        let a: Vec<u32> = (0..la).map(|_| r.gen_range(0..20)).collect();
        let b: Vec<u32> = (0..lb).map(|_| r.gen_range(0..20)).collect();
        let ab: Vec<u32> = a.iter().chain(&b).copied().collect();
        for (e, exact) in [(&dyadic, true), (&real, false)] {
            let da = embed_document(e, &Document::new(a.clone())).unwrap().values;
            let db = embed_document(e, &Document::new(b.clone())).unwrap().values;
            let dab = embed_document(e, &Document::new(ab.clone())).unwrap().values;
            for k in 0..5 {
                let expected = (la as f64 * da[k] + lb as f64 * db[k]) / (la + lb) as f64;
                if exact {
                    assert_eq!(dab[k], expected);
                } else {
                    assert!((dab[k] - expected).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn empty_document_is_an_error() {
    let e = random_vectors(&mut rng(4), 3, 2);
    assert!(matches!(embed_document(&e, &Document::new(vec![])), Err(Error::EmptyEmbedding)));
}

#[test]
fn text_and_binary_files_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let e = random_vectors(&mut rng(5), 25, 6);
    let text = dir.path().join("w.txt");
    let bin = dir.path().join("w.bin");
    save_word_vectors(&e, e.words(), &text).unwrap();
    save_word_vectors_binary(&e, e.words(), &bin).unwrap();
    let t = load_word_vectors(&text).unwrap();
    let b = load_any_word_vectors(&bin).unwrap();
    assert_eq!(t.words(), e.words());
    assert_eq!(b.words(), e.words());
    for (x, y) in t.data().iter().zip(e.data()) {
        assert!((x - y).abs() <= 5e-7);
    }
    for (x, y) in b.data().iter().zip(e.data()) {
        assert_eq!(*x, *y as f32 as f64);
    }
    assert_eq!(load_any_word_vectors(&text).unwrap(), t);
}

#[test]
fn checkpoint_roundtrip_is_exact() {
    use common::{encode_lines, random_model};
    let dir = tempfile::tempdir().unwrap();
    let (vocab, _) = encode_lines(&["a b c a b a".to_string()], 1);
    let params = random_model(&mut rng(6), 3, 4, 1.0);
    let path = dir.path().join("m.cvmd");
    save_model(&params, &vocab, &path).unwrap();
    let (p2, v2) = load_model(&path).unwrap();
    assert_eq!(p2, params);
    assert_eq!(v2.words(), vocab.words());
    assert_eq!(v2.counts(), vocab.counts());
}
