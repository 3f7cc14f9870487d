use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{Corpus, Granularity, LabelSpace, Session, SpeakerRole, Turn};
use crate::encoders::PAD_INDEX;

fn words_corpus(turns: &[&[&str]]) -> Corpus {
    let space = LabelSpace {
        task: "toy".to_string(),
        granularity: Granularity::Turn,
        codes: vec!["A".to_string()],
        grouping: Default::default(),
        binarize_threshold: None,
    };
    let turns: Vec<Turn> = turns
        .iter()
        .map(|ws| Turn {
            role: SpeakerRole::Therapist,
            words: ws.iter().map(|w| w.to_string()).collect(),
            labels: Some(crate::corpus::LabelSet { bits: vec![0] }),
        })
        .collect();
    Corpus {
        space,
        sessions: vec![Session {
            session_id: "s".to_string(),
            task_id: "toy".to_string(),
            turns,
            session_labels: None,
        }],
    }
}

fn vocab_of(words: &[&str]) -> BTreeMap<String, usize> {
    words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.to_string(), i + 2))
        .collect()
}

#[test]
fn pretraining_is_deterministic_in_the_seed() {
    let corpus = words_corpus(&[
        &["cat", "dog", "cat", "bird"],
        &["dog", "cat", "fish", "dog"],
    ]);
    let vocab = vocab_of(&["bird", "cat", "dog", "fish"]);
    let cfg = SgnsConfig {
        dim: 8,
        epochs: 2,
        ..Default::default()
    };
    let a = pretrain_embeddings(&corpus, &vocab, &cfg).unwrap();
    let b = pretrain_embeddings(&corpus, &vocab, &cfg).unwrap();
    assert_eq!(a.matrix.data, b.matrix.data);

    let cfg2 = SgnsConfig { seed: 1, ..cfg };
    let c = pretrain_embeddings(&corpus, &vocab, &cfg2).unwrap();
    assert_ne!(a.matrix.data, c.matrix.data);
}

#[test]
fn padding_row_is_never_touched() {
    let corpus = words_corpus(&[&["a", "b", "a", "c", "b", "a"]]);
    let vocab = vocab_of(&["a", "b", "c"]);
    let cfg = SgnsConfig {
        dim: 6,
        epochs: 3,
        ..Default::default()
    };
    let table = pretrain_embeddings(&corpus, &vocab, &cfg).unwrap();
    let pad_row = &table.matrix.data[PAD_INDEX * cfg.dim..(PAD_INDEX + 1) * cfg.dim];
    assert!(pad_row.iter().all(|&v| v == 0.0));
    assert!(table.matrix.requires_grad);
}

#[test]
fn co_occurring_tokens_become_more_similar() {
    // Two disjoint topics; tokens within a topic co-occur constantly and
    // should end up closer (cosine) to each other than across topics.
    let mut turns: Vec<&[&str]> = Vec::new();
    for _ in 0..40 {
        turns.push(&["red", "green", "red", "green", "red", "green"]);
        turns.push(&["up", "down", "up", "down", "up", "down"]);
    }
    let corpus = words_corpus(&turns);
    let vocab = vocab_of(&["down", "green", "red", "up"]);
    let cfg = SgnsConfig {
        dim: 16,
        epochs: 10,
        window: 3,
        ..Default::default()
    };
    let table = pretrain_embeddings(&corpus, &vocab, &cfg).unwrap();
    let vec_of = |w: &str| {
        let r = table.lookup(w);
        table.matrix.data[r * cfg.dim..(r + 1) * cfg.dim].to_vec()
    };
    let cosine = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let (red, green, up, down) = (vec_of("red"), vec_of("green"), vec_of("up"), vec_of("down"));
    let within = cosine(&red, &green).min(cosine(&up, &down));
    let across = cosine(&red, &up)
        .max(cosine(&red, &down))
        .max(cosine(&green, &up))
        .max(cosine(&green, &down));
    assert!(
        within > across,
        "within-topic {within} vs across-topic {across}"
    );
}

#[test]
fn sgd_updates_reduce_the_pair_loss() {
    let counts = vec![0, 5, 10, 10, 7];
    let cfg = SgnsConfig {
        dim: 8,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut model = SgnsModel::new(&counts, &cfg, &mut rng);
    let negatives = [4usize, 4];
    let before = model.pair_loss(2, 3, &negatives);
    for _ in 0..50 {
        model.update(2, 3, &negatives, 0.05);
    }
    let after = model.pair_loss(2, 3, &negatives);
    assert!(after < before, "loss {before} -> {after}");
}

#[test]
fn negative_sampling_skips_padding_and_unseen_tokens() {
    // Token 3 has zero count and must never be drawn; padding likewise.
    let counts = vec![9, 4, 6, 0, 2];
    let cfg = SgnsConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = SgnsModel::new(&counts, &cfg, &mut rng);
    for _ in 0..2000 {
        let s = model.sample_negative(&mut rng);
        assert_ne!(s, PAD_INDEX);
        assert_ne!(s, 3);
        assert!(s < counts.len());
    }
}

#[test]
fn empty_corpus_is_rejected() {
    let corpus = Corpus {
        space: words_corpus(&[&["x"]]).space,
        sessions: Vec::new(),
    };
    let vocab = vocab_of(&["x"]);
    assert!(pretrain_embeddings(&corpus, &vocab, &SgnsConfig::default()).is_err());
}
