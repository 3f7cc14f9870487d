//! Skip-gram with negative sampling for pretraining the word embeddings
//! on the training split.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::encoders::{EmbeddingTable, PAD_INDEX};
use crate::tensor::{Tensor, TensorError};

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub unigram_power: f64,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 32,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            unigram_power: 0.75,
            seed: 0,
        }
    }
}

/// Input and output vector tables plus the negative-sampling distribution.
pub struct SgnsModel {
    pub dim: usize,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    cumulative: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl SgnsModel {
    pub fn new(counts: &[usize], cfg: &SgnsConfig, rng: &mut ChaCha8Rng) -> Self {
        let rows = counts.len();
        let dim = cfg.dim;
        let mut input = vec![0.0; rows * dim];
        let bound = 0.5 / dim as f64;
        for (row, chunk) in input.chunks_mut(dim).enumerate() {
            if row == PAD_INDEX {
                continue;
            }
            for v in chunk.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        let output = vec![0.0; rows * dim];
        let mut cumulative = Vec::with_capacity(rows);
        let mut acc = 0.0;
        for (row, &c) in counts.iter().enumerate() {
            if row != PAD_INDEX {
                acc += (c as f64).powf(cfg.unigram_power);
            }
            cumulative.push(acc);
        }
        SgnsModel {
            dim,
            input,
            output,
            cumulative,
        }
    }

    pub fn sample_negative(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.gen_range(0.0..total);
        self.cumulative.partition_point(|&c| c <= x)
    }

    /// Negative log-likelihood of one positive pair and its negatives.
    pub fn pair_loss(&self, center: usize, ctx: usize, negatives: &[usize]) -> f64 {
        let d = self.dim;
        let dot = |a: usize, b: usize| -> f64 {
            (0..d)
                .map(|k| self.input[a * d + k] * self.output[b * d + k])
                .sum()
        };
        let mut loss = -sigmoid(dot(center, ctx)).max(1e-12).ln();
        for &neg in negatives {
            loss -= sigmoid(-dot(center, neg)).max(1e-12).ln();
        }
        loss
    }

    /// One SGD step on a positive pair plus its negatives.
    pub fn update(&mut self, center: usize, ctx: usize, negatives: &[usize], lr: f64) {
        if center == PAD_INDEX {
            return;
        }
        let d = self.dim;
        let mut center_grad = vec![0.0; d];
        for (i, &target) in std::iter::once(&ctx).chain(negatives).enumerate() {
            if target == PAD_INDEX {
                continue;
            }
            let label = if i == 0 { 1.0 } else { 0.0 };
            let dot: f64 = (0..d)
                .map(|k| self.input[center * d + k] * self.output[target * d + k])
                .sum();
            let g = sigmoid(dot) - label;
            for k in 0..d {
                center_grad[k] += g * self.output[target * d + k];
                self.output[target * d + k] -= lr * g * self.input[center * d + k];
            }
        }
        for k in 0..d {
            self.input[center * d + k] -= lr * center_grad[k];
        }
    }
}

/// Pretrain input embeddings over the training split. Deterministic given
/// the config seed; the padding row is never touched.
pub fn pretrain_embeddings(
    corpus: &Corpus,
    vocab: &BTreeMap<String, usize>,
    cfg: &SgnsConfig,
) -> Result<EmbeddingTable> {
    if corpus.sessions.is_empty() {
        return Err(TensorError::Usage(
            "pretraining over an empty corpus".to_string(),
        ));
    }
    let rows = vocab.values().max().map_or(1, |m| *m) + 1;
    let sentences: Vec<Vec<usize>> = corpus
        .sessions
        .iter()
        .flat_map(|s| &s.turns)
        .map(|t| {
            t.words
                .iter()
                .map(|w| *vocab.get(w).unwrap_or(&crate::encoders::UNK_INDEX))
                .collect()
        })
        .collect();
    let mut counts = vec![0usize; rows];
    for sent in &sentences {
        for &tok in sent {
            counts[tok] += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = SgnsModel::new(&counts, cfg, &mut rng);
    let mut negatives = vec![0usize; cfg.negatives];
    for _epoch in 0..cfg.epochs {
        for sent in &sentences {
            for (pos, &center) in sent.iter().enumerate() {
                let radius = rng.gen_range(1..=cfg.window);
                let lo = pos.saturating_sub(radius);
                let hi = (pos + radius).min(sent.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let ctx = sent[ctx_pos];
                    for slot in negatives.iter_mut() {
                        *slot = model.sample_negative(&mut rng);
                    }
                    model.update(center, ctx, &negatives, cfg.learning_rate);
                }
            }
        }
    }
    let mut matrix = Tensor::new(vec![rows, cfg.dim], model.input)?;
    matrix.requires_grad = true;
    Ok(EmbeddingTable {
        dim: cfg.dim,
        matrix,
        index: vocab.clone(),
    })
}

#[cfg(test)]
mod tests;
