mod common;

use common::{encode_lines, rng};
use corruptvec::baseline::train_cbow;
use corruptvec::corpus::{Document, Vocabulary};
use corruptvec::model::Combiner;
use corruptvec::synthetic::{topic_corpus, TopicSpec};
use corruptvec::trainer::{train_documents, TrainConfig};

fn corpus(docs: usize) -> (Vocabulary, Vec<Document>) {
    let spec = TopicSpec {
        docs,
        ..Default::default()
    };
    let (lines, _) = topic_corpus(&spec, &mut rng(5));
    encode_lines(&lines, 1)
}

fn small_config() -> TrainConfig {
    TrainConfig {
        dim: 16,
        epochs: 3,
        min_count: 1,
        workers: 1,
        subsample: 1e-3,
        ..Default::default()
    }
}

#[test]
fn loss_decreases_over_first_epochs() {
    let (vocab, docs) = corpus(300);
    let (_, report) = train_documents(&docs, &vocab, &small_config()).unwrap();
    assert_eq!(report.epoch_loss.len(), 3);
    assert!(report.epoch_loss.windows(2).all(|w| w[1] < w[0]), "{:?}", report.epoch_loss);
}

#[test]
fn single_worker_is_deterministic() {
    let (vocab, docs) = corpus(100);
    let (a, ra) = train_documents(&docs, &vocab, &small_config()).unwrap();
    let (b, rb) = train_documents(&docs, &vocab, &small_config()).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.epoch_loss, rb.epoch_loss);
    let other = TrainConfig {
        seed: 2,
        ..small_config()
    };
    let (c, _) = train_documents(&docs, &vocab, &other).unwrap();
    assert_ne!(a, c);
}

#[test]
fn cbow_configuration_matches_reference_bit_for_bit() {
    let (vocab, docs) = corpus(120);
    for neg_power in [0.0, 0.75] {
        let config = TrainConfig {
            global_context: false,
            corruption: 0.0,
            neg_power,
            ..small_config()
        };
        let (params, report) = train_documents(&docs, &vocab, &config).unwrap();
        let (reference, losses) = train_cbow(&docs, &vocab, &config).unwrap();
        assert!(params.input_matrix().iter().zip(reference.input_matrix()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(params.output_matrix().iter().zip(reference.output_matrix()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(report.epoch_loss, losses);
    }
}

#[test]
fn global_context_changes_the_result() {
    let (vocab, docs) = corpus(60);
    let (with, _) = train_documents(&docs, &vocab, &small_config()).unwrap();
    let config = TrainConfig {
        global_context: false,
        ..small_config()
    };
    let (without, _) = train_documents(&docs, &vocab, &config).unwrap();
    assert_ne!(with, without);
}

#[test]
fn options_train_to_finite_parameters() {
    let (vocab, docs) = corpus(80);
    for config in [
        TrainConfig {
            combiner: Combiner::Mean,
            ..small_config()
        },
        TrainConfig {
            resample_per_position: true,
            ..small_config()
        },
        TrainConfig {
            workers: 3,
            ..small_config()
        },
        TrainConfig {
            subsample: 0.0,
            negatives: 0,
            ..small_config()
        },
    ] {
        let (params, report) = train_documents(&docs, &vocab, &config).unwrap();
        assert!(params.is_finite(), "{config:?}");
        assert!(report.positions > 0);
    }
}

#[test]
fn parallel_training_scales() {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    if cores < 4 {
        eprintln!("skipping throughput check: {cores} core(s) available");
        return;
    }
    let (vocab, docs) = corpus(4000);
    let run = |workers| {
        let config = TrainConfig {
            workers,
            epochs: 1,
            dim: 50,
            ..small_config()
        };
        train_documents(&docs, &vocab, &config).unwrap().1.words_per_sec
    };
    let one = run(1);
    let four = run(4);
    assert!(four >= 2.0 * one, "1 worker {one:.0} w/s, 4 workers {four:.0} w/s");
}
