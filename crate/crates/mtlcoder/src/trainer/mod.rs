//! Training loops for the SL / ML / ML-MT regimes: deterministic batching,
//! early stopping, multi-seed runs, fine-tune initialization from
//! single-task checkpoints, and checkpoint persistence.

mod checkpoint;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CheckpointError, TrainMeta};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{build_vocab, split_train_val, Corpus, CorpusError, LabelSet, Session};
use crate::encoders::EmbeddingTable;
use crate::model::{
    encoder_output, init_multitask, init_single_task, BoundPredictor, BoundStack, ModelConfig,
    MultiTaskModel, Regime, SingleTaskModel, TurnVectorCache,
};
use crate::objectives::{
    compute_sample_weights, diff_loss, multilabel_bce, task_discriminator, task_loss,
    total_multitask_loss, weighted_loss, SampleWeightTable,
};
use crate::tensor::{adam_step, AdamState, Graph, TensorError, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] crate::evalreport::EvalError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// One training sample: a turn within a session (its context window is
/// assembled at encoding time).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub session: usize,
    pub turn: usize,
}

pub fn all_samples(corpus: &Corpus) -> Vec<SampleRef> {
    let mut out = Vec::new();
    for (si, session) in corpus.sessions.iter().enumerate() {
        for ti in 0..session.turns.len() {
            out.push(SampleRef {
                session: si,
                turn: ti,
            });
        }
    }
    out
}

/// Deterministic shuffled batches for one epoch. The final short batch is kept.
pub fn make_batches(
    samples: &[SampleRef],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<SampleRef>> {
    let mut order: Vec<SampleRef> = samples.to_vec();
    let epoch_seed = seed.wrapping_add((epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    order.shuffle(&mut rng);
    order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

/// Per-epoch metrics record, one JSON object per line on the metrics stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_time_s: f64,
}

/// Single-task model parameters bound into one graph.
enum BoundSingle {
    Joint {
        stack: BoundStack,
        predictor: BoundPredictor,
    },
    PerLabel {
        stacks: Vec<(BoundStack, BoundPredictor)>,
    },
}

struct SingleForward {
    bound: BoundSingle,
    caches: Vec<TurnVectorCache>,
}

impl SingleForward {
    fn bind(graph: &mut Graph, model: &SingleTaskModel) -> Result<SingleForward> {
        let bound = match model.config.regime {
            Regime::Sl => {
                let mut stacks = Vec::new();
                for l in 0..model.space.len() {
                    let prefix = format!("sl{l}.");
                    let stack = BoundStack::bind(graph, &model.tensors, &prefix)?;
                    let predictor = BoundPredictor::bind(graph, &model.tensors, &prefix)?;
                    stacks.push((stack, predictor));
                }
                BoundSingle::PerLabel { stacks }
            }
            _ => BoundSingle::Joint {
                stack: BoundStack::bind(graph, &model.tensors, "")?,
                predictor: BoundPredictor::bind(graph, &model.tensors, "")?,
            },
        };
        let n_caches = match &bound {
            BoundSingle::Joint { .. } => 1,
            BoundSingle::PerLabel { stacks } => stacks.len(),
        };
        Ok(SingleForward {
            bound,
            caches: vec![TurnVectorCache::new(); n_caches],
        })
    }

    /// Posterior vector (length L) for one sample.
    fn posterior(
        &mut self,
        graph: &mut Graph,
        model: &SingleTaskModel,
        session: &Session,
        sample: SampleRef,
    ) -> Result<Var> {
        let c = model.config.context_radius;
        match &mut self.bound {
            BoundSingle::Joint { stack, predictor } => {
                let g = encoder_output(
                    graph,
                    stack,
                    &model.vocab,
                    session,
                    sample.session,
                    sample.turn,
                    c,
                    &mut self.caches[0],
                )?;
                Ok(predictor.posterior(graph, g)?)
            }
            BoundSingle::PerLabel { stacks } => {
                let mut parts = Vec::with_capacity(stacks.len());
                for (l, (stack, predictor)) in stacks.iter().enumerate() {
                    let g = encoder_output(
                        graph,
                        stack,
                        &model.vocab,
                        session,
                        sample.session,
                        sample.turn,
                        c,
                        &mut self.caches[l],
                    )?;
                    parts.push(predictor.posterior(graph, g)?);
                }
                let mut joined = parts[0];
                for &p in &parts[1..] {
                    joined = graph.concat(joined, p)?;
                }
                Ok(joined)
            }
        }
    }
}

fn sample_weight_table(train: &Corpus) -> Result<SampleWeightTable> {
    let labels: Vec<LabelSet> = all_samples(train)
        .iter()
        .map(|s| train.turn_labels(&train.sessions[s.session], s.turn))
        .collect();
    Ok(compute_sample_weights(&labels)?)
}

/// Unweighted validation loss of a single-task model.
pub fn validation_loss_single(model: &SingleTaskModel, val: &Corpus) -> Result<f64> {
    let mut total = 0.0;
    for (si, session) in val.sessions.iter().enumerate() {
        let mut graph = Graph::new();
        let mut fwd = SingleForward::bind(&mut graph, model)?;
        for ti in 0..session.turns.len() {
            let sample = SampleRef {
                session: si,
                turn: ti,
            };
            let y = val.turn_labels(session, ti).as_f64();
            let posterior = fwd.posterior(&mut graph, model, session, sample)?;
            let loss = multilabel_bce(&mut graph, &y, posterior)?;
            total += graph.value(loss).data[0];
        }
    }
    Ok(total)
}

/// Per-turn posteriors for every session of a corpus (no training).
pub fn predict_posteriors_single(
    model: &SingleTaskModel,
    corpus: &Corpus,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut out = Vec::with_capacity(corpus.sessions.len());
    for (si, session) in corpus.sessions.iter().enumerate() {
        let mut graph = Graph::new();
        let mut fwd = SingleForward::bind(&mut graph, model)?;
        let mut per_turn = Vec::with_capacity(session.turns.len());
        for ti in 0..session.turns.len() {
            let sample = SampleRef {
                session: si,
                turn: ti,
            };
            let posterior = fwd.posterior(&mut graph, model, session, sample)?;
            per_turn.push(graph.value(posterior).data.clone());
        }
        out.push(per_turn);
    }
    Ok(out)
}

pub struct TrainOutcome {
    pub model: SingleTaskModel,
    pub meta: TrainMeta,
    pub epoch_logs: Vec<EpochLog>,
}

/// Train one single-task model (SL or ML regime, with or without sample
/// weighting) with early stopping on a held-out session-level split.
pub fn train_single_task(
    corpus: &Corpus,
    config: &ModelConfig,
    embedding: Option<&EmbeddingTable>,
) -> Result<TrainOutcome> {
    let (train, val) = split_train_val(corpus, config.validation_fraction, config.seed)?;
    let vocab = match embedding {
        Some(table) => table.index.clone(),
        None => build_vocab(&train, 1),
    };
    let weights = if config.sample_weighting {
        Some(sample_weight_table(&train)?)
    } else {
        None
    };
    let mut model = init_single_task(config, &corpus.space, &vocab, embedding, config.seed);
    let mut adam = AdamState::new(config.learning_rate);
    let samples = all_samples(&train);

    let mut best_tensors = model.tensors.clone();
    let mut best_val = validation_loss_single(&model, &val)?;
    let mut best_epoch = 0usize;
    let mut epochs_without_improvement = 0usize;
    let mut epoch_logs = Vec::new();
    let mut epochs_run = 0usize;

    for epoch in 1..=config.max_epochs {
        let start = std::time::Instant::now();
        let mut train_loss = 0.0;
        for (bi, batch) in make_batches(&samples, config.batch_size, config.seed, epoch)
            .iter()
            .enumerate()
        {
            let mut graph = Graph::new();
            let mut fwd = SingleForward::bind(&mut graph, &model)?;
            let mut losses = Vec::with_capacity(batch.len());
            for &sample in batch {
                let session = &train.sessions[sample.session];
                let labels = train.turn_labels(session, sample.turn);
                let posterior = fwd.posterior(&mut graph, &model, session, sample)?;
                let loss = multilabel_bce(&mut graph, &labels.as_f64(), posterior)?;
                let w = weights.as_ref().map_or(1.0, |t| t.weight(&labels));
                losses.push((loss, w));
            }
            let batch_loss = weighted_loss(&mut graph, &losses)?;
            let loss_value = graph.value(batch_loss).data[0];
            if !loss_value.is_finite() {
                return Err(TrainError::Diverged { epoch, batch: bi });
            }
            train_loss += loss_value;
            let grads = graph.backward(batch_loss)?;
            adam_step(&mut model.tensors, &grads, &mut adam)?;
        }
        epochs_run = epoch;
        let val_loss = validation_loss_single(&model, &val)?;
        epoch_logs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_tensors = model.tensors.clone();
            best_epoch = epoch;
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement >= config.patience {
                break;
            }
        }
    }
    model.tensors = best_tensors;
    Ok(TrainOutcome {
        model,
        meta: TrainMeta {
            epochs_run,
            best_epoch,
            best_val_loss: best_val,
            seed: config.seed,
        },
        epoch_logs,
    })
}

/// Multi-task model parameters bound into one graph.
pub struct MultiForward {
    pub stack_a: BoundStack,
    pub stack_b: BoundStack,
    pub stack_shared: BoundStack,
    pub pred_a: BoundPredictor,
    pub pred_b: BoundPredictor,
    pub disc_u: Var,
    pub disc_b: Var,
    cache_a: TurnVectorCache,
    cache_b: TurnVectorCache,
    cache_shared_a: TurnVectorCache,
    cache_shared_b: TurnVectorCache,
}

/// Which task a batch came from; also the discriminator's reference label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskSide {
    A,
    B,
}

impl TaskSide {
    pub fn label(self) -> f64 {
        match self {
            TaskSide::A => 0.0,
            TaskSide::B => 1.0,
        }
    }
}

impl MultiForward {
    pub fn bind(graph: &mut Graph, model: &MultiTaskModel) -> Result<MultiForward> {
        let stack_a = BoundStack::bind(graph, &model.tensors, "task_a.")?;
        let stack_b = BoundStack::bind(graph, &model.tensors, "task_b.")?;
        let stack_shared = BoundStack::bind(graph, &model.tensors, "shared.")?;
        let pred_a = BoundPredictor::bind(graph, &model.tensors, "task_a.")?;
        let pred_b = BoundPredictor::bind(graph, &model.tensors, "task_b.")?;
        let disc_u = graph.param("disc.u", &model.tensors["disc.u"])?;
        let disc_b = graph.param("disc.b", &model.tensors["disc.b"])?;
        Ok(MultiForward {
            stack_a,
            stack_b,
            stack_shared,
            pred_a,
            pred_b,
            disc_u,
            disc_b,
            cache_a: TurnVectorCache::new(),
            cache_b: TurnVectorCache::new(),
            cache_shared_a: TurnVectorCache::new(),
            cache_shared_b: TurnVectorCache::new(),
        })
    }

    /// Private and shared encoder outputs for one sample of one task.
    pub fn encode(
        &mut self,
        graph: &mut Graph,
        model: &MultiTaskModel,
        side: TaskSide,
        session: &Session,
        sample: SampleRef,
    ) -> Result<(Var, Var)> {
        let c = model.config.context_radius;
        let (stack, vocab, cache, shared_cache) = match side {
            TaskSide::A => (
                &self.stack_a,
                &model.vocab_a,
                &mut self.cache_a,
                &mut self.cache_shared_a,
            ),
            TaskSide::B => (
                &self.stack_b,
                &model.vocab_b,
                &mut self.cache_b,
                &mut self.cache_shared_b,
            ),
        };
        let g_private = encoder_output(
            graph,
            stack,
            vocab,
            session,
            sample.session,
            sample.turn,
            c,
            cache,
        )?;
        let g_shared = encoder_output(
            graph,
            &self.stack_shared,
            &model.vocab_shared,
            session,
            sample.session,
            sample.turn,
            c,
            shared_cache,
        )?;
        Ok((g_private, g_shared))
    }

    /// Task posterior from the concatenated private and shared features.
    pub fn posterior(
        &mut self,
        graph: &mut Graph,
        side: TaskSide,
        g_private: Var,
        g_shared: Var,
    ) -> Result<Var> {
        let features = graph.concat(g_private, g_shared)?;
        let predictor = match side {
            TaskSide::A => &self.pred_a,
            TaskSide::B => &self.pred_b,
        };
        Ok(predictor.posterior(graph, features)?)
    }
}

/// One adversarial training step on a batch from one task. Returns the
/// batch's total loss value.
fn multitask_batch_step(
    model: &mut MultiTaskModel,
    adam: &mut AdamState,
    corpus: &Corpus,
    side: TaskSide,
    batch: &[SampleRef],
    weights: Option<&SampleWeightTable>,
) -> Result<f64> {
    let mut graph = Graph::new();
    let mut fwd = MultiForward::bind(&mut graph, model)?;
    let mut losses = Vec::with_capacity(batch.len());
    let mut task_losses = Vec::with_capacity(batch.len());
    let mut shared_rows = Vec::with_capacity(batch.len());
    let mut private_rows = Vec::with_capacity(batch.len());
    for &sample in batch {
        let session = &corpus.sessions[sample.session];
        let labels = corpus.turn_labels(session, sample.turn);
        let (g_private, g_shared) = fwd.encode(&mut graph, model, side, session, sample)?;
        let posterior = fwd.posterior(&mut graph, side, g_private, g_shared)?;
        let loss = multilabel_bce(&mut graph, &labels.as_f64(), posterior)?;
        let w = weights.map_or(1.0, |t| t.weight(&labels));
        losses.push((loss, w));

        let reversed = graph.gradient_reversal(g_shared)?;
        let that = task_discriminator(&mut graph, reversed, fwd.disc_u, fwd.disc_b)?;
        task_losses.push(task_loss(&mut graph, side.label(), that)?);
        shared_rows.push(g_shared);
        private_rows.push(g_private);
    }
    let e_m = weighted_loss(&mut graph, &losses)?;
    let mut e_task = task_losses[0];
    for &l in &task_losses[1..] {
        e_task = graph.add(e_task, l)?;
    }
    let shared_mat = graph.stack_rows(&shared_rows)?;
    let private_mat = graph.stack_rows(&private_rows)?;
    let e_diff = diff_loss(&mut graph, shared_mat, private_mat)?;
    let total = total_multitask_loss(
        &mut graph,
        &[e_m],
        e_task,
        e_diff,
        model.config.lambda,
        model.config.gamma,
    )?;
    let loss_value = graph.value(total).data[0];
    let grads = graph.backward(total)?;
    adam_step(&mut model.tensors, &grads, adam)?;
    Ok(loss_value)
}

/// Unweighted validation loss of one task under the multi-task model.
pub fn validation_loss_multitask(
    model: &MultiTaskModel,
    side: TaskSide,
    val: &Corpus,
) -> Result<f64> {
    let mut total = 0.0;
    for (si, session) in val.sessions.iter().enumerate() {
        let mut graph = Graph::new();
        let mut fwd = MultiForward::bind(&mut graph, model)?;
        for ti in 0..session.turns.len() {
            let sample = SampleRef {
                session: si,
                turn: ti,
            };
            let labels = val.turn_labels(session, ti).as_f64();
            let (g_private, g_shared) = fwd.encode(&mut graph, model, side, session, sample)?;
            let posterior = fwd.posterior(&mut graph, side, g_private, g_shared)?;
            let loss = multilabel_bce(&mut graph, &labels, posterior)?;
            total += graph.value(loss).data[0];
        }
    }
    Ok(total)
}

/// Per-turn posteriors for one task's corpus under the multi-task model.
pub fn predict_posteriors_multitask(
    model: &MultiTaskModel,
    side: TaskSide,
    corpus: &Corpus,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut out = Vec::with_capacity(corpus.sessions.len());
    for (si, session) in corpus.sessions.iter().enumerate() {
        let mut graph = Graph::new();
        let mut fwd = MultiForward::bind(&mut graph, model)?;
        let mut per_turn = Vec::with_capacity(session.turns.len());
        for ti in 0..session.turns.len() {
            let sample = SampleRef {
                session: si,
                turn: ti,
            };
            let (g_private, g_shared) = fwd.encode(&mut graph, model, side, session, sample)?;
            let posterior = fwd.posterior(&mut graph, side, g_private, g_shared)?;
            per_turn.push(graph.value(posterior).data.clone());
        }
        out.push(per_turn);
    }
    Ok(out)
}

/// Frozen encoder features for the task-invariance probe: for each turn,
/// the shared and private encoder outputs plus the source-task label.
pub fn extract_features(
    model: &MultiTaskModel,
    side: TaskSide,
    corpus: &Corpus,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut out = Vec::new();
    for (si, session) in corpus.sessions.iter().enumerate() {
        let mut graph = Graph::new();
        let mut fwd = MultiForward::bind(&mut graph, model)?;
        for ti in 0..session.turns.len() {
            let sample = SampleRef {
                session: si,
                turn: ti,
            };
            let (g_private, g_shared) = fwd.encode(&mut graph, model, side, session, sample)?;
            out.push((
                graph.value(g_shared).data.clone(),
                graph.value(g_private).data.clone(),
            ));
        }
    }
    Ok(out)
}

pub struct MultiTrainOutcome {
    pub model: MultiTaskModel,
    pub meta: TrainMeta,
    pub epoch_logs: Vec<EpochLog>,
}

/// Adversarial multi-task training with an alternating per-step batch
/// schedule and early stopping on the summed validation losses.
pub fn train_multitask(
    corpus_a: &Corpus,
    corpus_b: &Corpus,
    config: &ModelConfig,
    init_a: &SingleTaskModel,
    init_b: &SingleTaskModel,
) -> Result<MultiTrainOutcome> {
    let (train_a, val_a) = split_train_val(corpus_a, config.validation_fraction, config.seed)?;
    let (train_b, val_b) =
        split_train_val(corpus_b, config.validation_fraction, config.seed.wrapping_add(1))?;
    let weights_a = if config.sample_weighting {
        Some(sample_weight_table(&train_a)?)
    } else {
        None
    };
    let weights_b = if config.sample_weighting {
        Some(sample_weight_table(&train_b)?)
    } else {
        None
    };
    let mut model = init_multitask(config, init_a, init_b, config.seed)?;
    let mut adam = AdamState::new(config.finetune_learning_rate);
    let samples_a = all_samples(&train_a);
    let samples_b = all_samples(&train_b);

    let mut best_tensors = model.tensors.clone();
    let mut best_val = validation_loss_multitask(&model, TaskSide::A, &val_a)?
        + validation_loss_multitask(&model, TaskSide::B, &val_b)?;
    let mut best_epoch = 0usize;
    let mut epochs_without_improvement = 0usize;
    let mut epoch_logs = Vec::new();
    let mut epochs_run = 0usize;

    for epoch in 1..=config.max_epochs {
        let start = std::time::Instant::now();
        let batches_a = make_batches(&samples_a, config.batch_size, config.seed, epoch);
        let batches_b =
            make_batches(&samples_b, config.batch_size, config.seed.wrapping_add(1), epoch);
        let mut train_loss = 0.0;
        let steps = batches_a.len().max(batches_b.len());
        for step in 0..steps {
            if let Some(batch) = batches_a.get(step) {
                let v = multitask_batch_step(
                    &mut model,
                    &mut adam,
                    &train_a,
                    TaskSide::A,
                    batch,
                    weights_a.as_ref(),
                )?;
                if !v.is_finite() {
                    return Err(TrainError::Diverged { epoch, batch: step });
                }
                train_loss += v;
            }
            if let Some(batch) = batches_b.get(step) {
                let v = multitask_batch_step(
                    &mut model,
                    &mut adam,
                    &train_b,
                    TaskSide::B,
                    batch,
                    weights_b.as_ref(),
                )?;
                if !v.is_finite() {
                    return Err(TrainError::Diverged { epoch, batch: step });
                }
                train_loss += v;
            }
        }
        epochs_run = epoch;
        let val_loss = validation_loss_multitask(&model, TaskSide::A, &val_a)?
            + validation_loss_multitask(&model, TaskSide::B, &val_b)?;
        epoch_logs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_tensors = model.tensors.clone();
            best_epoch = epoch;
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement >= config.patience {
                break;
            }
        }
    }
    model.tensors = best_tensors;
    Ok(MultiTrainOutcome {
        model,
        meta: TrainMeta {
            epochs_run,
            best_epoch,
            best_val_loss: best_val,
            seed: config.seed,
        },
        epoch_logs,
    })
}

/// Outcome of one seed in a multi-seed run.
pub struct SeedRun {
    pub seed: u64,
    pub outcome: std::result::Result<TrainOutcome, String>,
    pub macro_f1: Option<f64>,
}

pub struct SeedSummary {
    pub runs: Vec<SeedRun>,
    pub mean_macro_f1: f64,
    pub stdev_macro_f1: f64,
    pub diverged: usize,
}

/// Independent single-task runs with seeds seed..seed+n-1; the reported
/// metric is the mean validation macro-F1 across completed runs.
pub fn run_seeds(
    corpus: &Corpus,
    config: &ModelConfig,
    embedding: Option<&EmbeddingTable>,
    n: usize,
) -> Result<SeedSummary> {
    assert!(n >= 1, "need at least one seed");
    let mut runs = Vec::with_capacity(n);
    let mut scores = Vec::new();
    let mut diverged = 0usize;
    for i in 0..n {
        let seed = config.seed + i as u64;
        let mut cfg = config.clone();
        cfg.seed = seed;
        match train_single_task(corpus, &cfg, embedding) {
            Ok(outcome) => {
                let (_, val) = split_train_val(corpus, cfg.validation_fraction, seed)?;
                let macro_f1 = evaluate_macro_f1(&outcome.model, &val)?;
                scores.push(macro_f1);
                runs.push(SeedRun {
                    seed,
                    outcome: Ok(outcome),
                    macro_f1: Some(macro_f1),
                });
            }
            Err(TrainError::Diverged { epoch, batch }) => {
                diverged += 1;
                log::warn!("seed {seed} diverged at epoch {epoch}, batch {batch}; excluded");
                runs.push(SeedRun {
                    seed,
                    outcome: Err(format!("diverged at epoch {epoch}, batch {batch}")),
                    macro_f1: None,
                });
            }
            Err(e) => return Err(e),
        }
    }
    let mean = if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    let stdev = if scores.len() > 1 {
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (scores.len() - 1) as f64;
        var.sqrt()
    } else {
        0.0
    };
    Ok(SeedSummary {
        runs,
        mean_macro_f1: mean,
        stdev_macro_f1: stdev,
        diverged,
    })
}

/// Reference and predicted label sets for a corpus: per turn for
/// turn-granularity tasks, per session (with posterior averaging) otherwise.
pub fn reference_and_predicted(
    corpus: &Corpus,
    posteriors: &[Vec<Vec<f64>>],
    tau: f64,
) -> Result<(Vec<LabelSet>, Vec<LabelSet>)> {
    use crate::corpus::Granularity;
    use crate::evalreport::{aggregate_session, threshold};
    let mut refs = Vec::new();
    let mut preds = Vec::new();
    for (session, session_posteriors) in corpus.sessions.iter().zip(posteriors) {
        match corpus.space.granularity {
            Granularity::Turn => {
                for (ti, p) in session_posteriors.iter().enumerate() {
                    refs.push(corpus.turn_labels(session, ti));
                    preds.push(threshold(p, tau));
                }
            }
            Granularity::Session => {
                refs.push(session.session_labels.clone().expect("session labels"));
                preds.push(threshold(&aggregate_session(session_posteriors)?, tau));
            }
        }
    }
    Ok((refs, preds))
}

pub fn evaluate_macro_f1(model: &SingleTaskModel, corpus: &Corpus) -> Result<f64> {
    let posteriors = predict_posteriors_single(model, corpus)?;
    let (refs, preds) =
        reference_and_predicted(corpus, &posteriors, model.config.decision_threshold)?;
    Ok(crate::evalreport::f1_per_label(&refs, &preds)?.macro_f1)
}

/// Checkpoint assembly for single-task models.
pub fn single_checkpoint(model: &SingleTaskModel, meta: TrainMeta) -> Checkpoint {
    let mut vocabs = BTreeMap::new();
    vocabs.insert("main".to_string(), model.vocab.clone());
    Checkpoint {
        config: model.config.clone(),
        spaces: vec![model.space.clone()],
        vocabs,
        tensors: model.tensors.clone(),
        meta,
    }
}

/// Checkpoint assembly for multi-task models.
pub fn multitask_checkpoint(model: &MultiTaskModel, meta: TrainMeta) -> Checkpoint {
    let mut vocabs = BTreeMap::new();
    vocabs.insert("task_a".to_string(), model.vocab_a.clone());
    vocabs.insert("task_b".to_string(), model.vocab_b.clone());
    vocabs.insert("shared".to_string(), model.vocab_shared.clone());
    Checkpoint {
        config: model.config.clone(),
        spaces: vec![model.space_a.clone(), model.space_b.clone()],
        vocabs,
        tensors: model.tensors.clone(),
        meta,
    }
}

impl Checkpoint {
    pub fn into_single(self) -> std::result::Result<SingleTaskModel, CheckpointError> {
        if self.spaces.len() != 1 || !self.vocabs.contains_key("main") {
            return Err(CheckpointError::Format(
                "checkpoint does not hold a single-task model".to_string(),
            ));
        }
        Ok(SingleTaskModel {
            config: self.config,
            space: self.spaces.into_iter().next().unwrap(),
            vocab: self.vocabs.into_iter().next().unwrap().1,
            tensors: self.tensors,
        })
    }

    pub fn into_multitask(mut self) -> std::result::Result<MultiTaskModel, CheckpointError> {
        if self.spaces.len() != 2 {
            return Err(CheckpointError::Format(
                "checkpoint does not hold a multi-task model".to_string(),
            ));
        }
        let vocab_a = self.vocabs.remove("task_a");
        let vocab_b = self.vocabs.remove("task_b");
        let vocab_shared = self.vocabs.remove("shared");
        match (vocab_a, vocab_b, vocab_shared) {
            (Some(a), Some(b), Some(shared)) => {
                let mut spaces = self.spaces.into_iter();
                Ok(MultiTaskModel {
                    config: self.config,
                    space_a: spaces.next().unwrap(),
                    space_b: spaces.next().unwrap(),
                    vocab_a: a,
                    vocab_b: b,
                    vocab_shared: shared,
                    tensors: self.tensors,
                })
            }
            _ => Err(CheckpointError::Format(
                "multi-task checkpoint lacks task vocabularies".to_string(),
            )),
        }
    }
}
