//! Model assembly: configuration, parameter initialization per regime,
//! and the word -> turn -> context -> predictor forward pass.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSpace, Session};
use crate::encoders::{
    encode_turn_context, encode_words, init_lstm_params, role_one_hot, role_projection,
    EmbeddingTable, LstmVars, PAD_INDEX, UNK_INDEX,
};
use crate::tensor::{glorot_uniform_init, Graph, Result, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Sl,
    Ml,
    Mlmt,
}

impl std::str::FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sl" => Ok(Regime::Sl),
            "ml" => Ok(Regime::Ml),
            "mlmt" => Ok(Regime::Mlmt),
            other => Err(format!("unknown regime '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ModelConfig {
    pub regime: Regime,
    pub sample_weighting: bool,
    pub context_radius: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub turn_hidden_dim: usize,
    /// Role projection output size; defaults to the label-space size L.
    pub role_proj_dim: Option<usize>,
    pub lambda: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub finetune_learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub decision_threshold: f64,
    pub seed: u64,
    pub n_seeds: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            regime: Regime::Ml,
            sample_weighting: false,
            context_radius: 0,
            embedding_dim: 32,
            hidden_dim: 32,
            turn_hidden_dim: 32,
            role_proj_dim: None,
            lambda: 0.05,
            gamma: 0.01,
            learning_rate: 1e-3,
            finetune_learning_rate: 1e-4,
            batch_size: 32,
            patience: 3,
            max_epochs: 20,
            validation_fraction: 0.10,
            decision_threshold: 0.5,
            seed: 0,
            n_seeds: 10,
        }
    }
}

impl ModelConfig {
    pub fn role_dim(&self, label_count: usize) -> usize {
        self.role_proj_dim.unwrap_or(label_count)
    }
}

/// Parameters and vocabulary of one single-task model (SL or ML regime).
#[derive(Debug, Clone)]
pub struct SingleTaskModel {
    pub config: ModelConfig,
    pub space: LabelSpace,
    pub vocab: BTreeMap<String, usize>,
    pub tensors: BTreeMap<String, Tensor>,
}

/// Parameters of the adversarial multi-task model: private stacks per
/// task, one shared stack, the task discriminator, and per-task predictors.
#[derive(Debug, Clone)]
pub struct MultiTaskModel {
    pub config: ModelConfig,
    pub space_a: LabelSpace,
    pub space_b: LabelSpace,
    pub vocab_a: BTreeMap<String, usize>,
    pub vocab_b: BTreeMap<String, usize>,
    pub vocab_shared: BTreeMap<String, usize>,
    pub tensors: BTreeMap<String, Tensor>,
}

fn embed_rows(vocab: &BTreeMap<String, usize>) -> usize {
    vocab.values().max().map_or(UNK_INDEX, |m| *m) + 1
}

/// Encoder-stack parameter names (everything except the predictor) under
/// an empty prefix. Checkpoint-to-multitask initialization copies these.
pub fn encoder_tensor_names() -> Vec<String> {
    let mut names = vec!["embed".to_string(), "role.u".to_string(), "role.b".to_string()];
    for layer in ["word_fwd", "word_bwd", "turn_fwd", "turn_bwd"] {
        for gate in ["input", "forget", "output", "cell"] {
            names.push(format!("{layer}.w_{gate}"));
            names.push(format!("{layer}.b_{gate}"));
        }
    }
    names
}

fn init_stack(
    tensors: &mut BTreeMap<String, Tensor>,
    prefix: &str,
    vocab_rows: usize,
    config: &ModelConfig,
    role_dim: usize,
    embedding: Option<&EmbeddingTable>,
    rng: &mut ChaCha8Rng,
) {
    let d = config.embedding_dim;
    let h = config.hidden_dim;
    let th = config.turn_hidden_dim;
    let embed = match embedding {
        Some(table) => {
            assert_eq!(table.dim, d, "pretrained embedding dim mismatch");
            table.matrix.clone().with_grad()
        }
        None => {
            let mut m = glorot_uniform_init(vocab_rows, d, rng);
            for j in 0..d {
                m.data[PAD_INDEX * d + j] = 0.0;
            }
            m
        }
    };
    tensors.insert(format!("{prefix}embed"), embed);
    init_lstm_params(tensors, &format!("{prefix}word_fwd"), d, h, rng);
    init_lstm_params(tensors, &format!("{prefix}word_bwd"), d, h, rng);
    tensors.insert(
        format!("{prefix}role.u"),
        glorot_uniform_init(role_dim, 2, rng),
    );
    tensors.insert(
        format!("{prefix}role.b"),
        Tensor::zeros(vec![role_dim]).with_grad(),
    );
    let turn_input = 2 * h + role_dim;
    init_lstm_params(tensors, &format!("{prefix}turn_fwd"), turn_input, th, rng);
    init_lstm_params(tensors, &format!("{prefix}turn_bwd"), turn_input, th, rng);
}

fn init_predictor(
    tensors: &mut BTreeMap<String, Tensor>,
    prefix: &str,
    input_dim: usize,
    outputs: usize,
    rng: &mut ChaCha8Rng,
) {
    tensors.insert(
        format!("{prefix}pred.w"),
        glorot_uniform_init(outputs, input_dim, rng),
    );
    tensors.insert(
        format!("{prefix}pred.b"),
        Tensor::zeros(vec![outputs]).with_grad(),
    );
}

/// Initialize a fresh single-task model. In the SL regime, L independent
/// single-output stacks are created under `sl{l}.` prefixes.
pub fn init_single_task(
    config: &ModelConfig,
    space: &LabelSpace,
    vocab: &BTreeMap<String, usize>,
    embedding: Option<&EmbeddingTable>,
    seed: u64,
) -> SingleTaskModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let role_dim = config.role_dim(space.len());
    let rows = embed_rows(vocab);
    let mut tensors = BTreeMap::new();
    match config.regime {
        Regime::Sl => {
            for l in 0..space.len() {
                let prefix = format!("sl{l}.");
                init_stack(&mut tensors, &prefix, rows, config, role_dim, embedding, &mut rng);
                init_predictor(&mut tensors, &prefix, 2 * config.turn_hidden_dim, 1, &mut rng);
            }
        }
        _ => {
            init_stack(&mut tensors, "", rows, config, role_dim, embedding, &mut rng);
            init_predictor(
                &mut tensors,
                "",
                2 * config.turn_hidden_dim,
                space.len(),
                &mut rng,
            );
        }
    }
    SingleTaskModel {
        config: config.clone(),
        space: space.clone(),
        vocab: vocab.clone(),
        tensors,
    }
}

/// Merge two vocabularies into a fresh shared token map.
pub fn union_vocab(
    a: &BTreeMap<String, usize>,
    b: &BTreeMap<String, usize>,
) -> BTreeMap<String, usize> {
    let mut tokens: Vec<&String> = a.keys().chain(b.keys()).collect();
    tokens.sort();
    tokens.dedup();
    tokens
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i + 2))
        .collect()
}

/// Build the multi-task model: private encoders copied from the
/// single-task checkpoints, shared stack and all predictors fresh.
pub fn init_multitask(
    config: &ModelConfig,
    init_a: &SingleTaskModel,
    init_b: &SingleTaskModel,
    seed: u64,
) -> Result<MultiTaskModel> {
    for init in [init_a, init_b] {
        if init.config.embedding_dim != config.embedding_dim
            || init.config.hidden_dim != config.hidden_dim
            || init.config.turn_hidden_dim != config.turn_hidden_dim
        {
            return Err(TensorError::Usage(
                "single-task checkpoint dimensions do not match the multi-task config".to_string(),
            ));
        }
    }
    let role_a = config.role_dim(init_a.space.len());
    let role_b = config.role_dim(init_b.space.len());
    if role_a != role_b {
        return Err(TensorError::Usage(format!(
            "shared encoder requires one role projection size across tasks, got {role_a} and {role_b}; set role_proj_dim explicitly"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = BTreeMap::new();
    for (task_prefix, init) in [("task_a.", init_a), ("task_b.", init_b)] {
        let mut copied = 0usize;
        for name in encoder_tensor_names() {
            if let Some(t) = init.tensors.get(&name) {
                tensors.insert(format!("{task_prefix}{name}"), t.clone());
                copied += 1;
            }
        }
        if copied == 0 {
            return Err(TensorError::Usage(format!(
                "checkpoint for {task_prefix} holds no encoder tensors (was it trained in the SL regime?)"
            )));
        }
        let ignored: Vec<&String> = init
            .tensors
            .keys()
            .filter(|k| k.contains("pred."))
            .collect();
        if !ignored.is_empty() {
            log::warn!(
                "{task_prefix}: ignoring {} predictor tensors from the single-task checkpoint",
                ignored.len()
            );
        }
    }
    let vocab_shared = union_vocab(&init_a.vocab, &init_b.vocab);
    init_stack(
        &mut tensors,
        "shared.",
        embed_rows(&vocab_shared),
        config,
        role_a,
        None,
        &mut rng,
    );
    let pred_input = 4 * config.turn_hidden_dim;
    init_predictor(&mut tensors, "task_a.", pred_input, init_a.space.len(), &mut rng);
    init_predictor(&mut tensors, "task_b.", pred_input, init_b.space.len(), &mut rng);
    tensors.insert(
        "disc.u".to_string(),
        glorot_uniform_init(1, 2 * config.turn_hidden_dim, &mut rng),
    );
    tensors.insert("disc.b".to_string(), Tensor::zeros(vec![1]).with_grad());
    Ok(MultiTaskModel {
        config: config.clone(),
        space_a: init_a.space.clone(),
        space_b: init_b.space.clone(),
        vocab_a: init_a.vocab.clone(),
        vocab_b: init_b.vocab.clone(),
        vocab_shared,
        tensors,
    })
}

/// Encoder-stack parameters bound into one graph.
pub struct BoundStack {
    pub embed: Var,
    pub word_fwd: LstmVars,
    pub word_bwd: LstmVars,
    pub role_u: Var,
    pub role_b: Var,
    pub turn_fwd: LstmVars,
    pub turn_bwd: LstmVars,
    pub role_dim: usize,
}

impl BoundStack {
    pub fn bind(
        graph: &mut Graph,
        tensors: &BTreeMap<String, Tensor>,
        prefix: &str,
    ) -> Result<BoundStack> {
        let get = |key: String| -> Result<Tensor> {
            tensors
                .get(&key)
                .cloned()
                .ok_or_else(|| TensorError::Usage(format!("missing parameter '{key}'")))
        };
        let embed_t = get(format!("{prefix}embed"))?;
        let embed = graph.param(&format!("{prefix}embed"), &embed_t)?;
        let word_fwd = LstmVars::bind(graph, tensors, &format!("{prefix}word_fwd"))?;
        let word_bwd = LstmVars::bind(graph, tensors, &format!("{prefix}word_bwd"))?;
        let role_u_t = get(format!("{prefix}role.u"))?;
        let role_dim = role_u_t.shape[0];
        let role_u = graph.param(&format!("{prefix}role.u"), &role_u_t)?;
        let role_b = graph.param(&format!("{prefix}role.b"), &get(format!("{prefix}role.b"))?)?;
        let turn_fwd = LstmVars::bind(graph, tensors, &format!("{prefix}turn_fwd"))?;
        let turn_bwd = LstmVars::bind(graph, tensors, &format!("{prefix}turn_bwd"))?;
        Ok(BoundStack {
            embed,
            word_fwd,
            word_bwd,
            role_u,
            role_b,
            turn_fwd,
            turn_bwd,
            role_dim,
        })
    }

    /// Width of the turn vector X_ij.
    pub fn turn_vector_dim(&self) -> usize {
        2 * self.word_fwd.hidden_dim + self.role_dim
    }
}

/// Predictor layer bound into one graph.
pub struct BoundPredictor {
    pub w: Var,
    pub b: Var,
}

impl BoundPredictor {
    pub fn bind(
        graph: &mut Graph,
        tensors: &BTreeMap<String, Tensor>,
        prefix: &str,
    ) -> Result<BoundPredictor> {
        let get = |key: String| -> Result<Tensor> {
            tensors
                .get(&key)
                .cloned()
                .ok_or_else(|| TensorError::Usage(format!("missing parameter '{key}'")))
        };
        let w = graph.param(&format!("{prefix}pred.w"), &get(format!("{prefix}pred.w"))?)?;
        let b = graph.param(&format!("{prefix}pred.b"), &get(format!("{prefix}pred.b"))?)?;
        Ok(BoundPredictor { w, b })
    }

    pub fn posterior(&self, graph: &mut Graph, features: Var) -> Result<Var> {
        let affine = graph.matmul(self.w, features)?;
        let pre = graph.add(affine, self.b)?;
        graph.sigmoid(pre)
    }
}

/// Per-graph cache of turn vectors so overlapping context windows are
/// encoded once.
pub type TurnVectorCache = HashMap<(usize, usize), Var>;

fn token_rows(vocab: &BTreeMap<String, usize>, words: &[String]) -> Vec<usize> {
    words
        .iter()
        .map(|w| *vocab.get(w).unwrap_or(&UNK_INDEX))
        .collect()
}

/// Turn vector X_ij = [H_ij ; U_X r_ij + b_X].
pub fn turn_vector(
    graph: &mut Graph,
    stack: &BoundStack,
    vocab: &BTreeMap<String, usize>,
    session: &Session,
    session_idx: usize,
    turn_idx: usize,
    cache: &mut TurnVectorCache,
) -> Result<Var> {
    if let Some(&v) = cache.get(&(session_idx, turn_idx)) {
        return Ok(v);
    }
    let turn = &session.turns[turn_idx];
    let rows = token_rows(vocab, &turn.words);
    let pooled = encode_words(graph, stack.embed, &rows, &stack.word_fwd, &stack.word_bwd)?;
    let role = graph.input(role_one_hot(turn.role));
    let proj = role_projection(graph, role, stack.role_u, stack.role_b)?;
    let x = graph.concat(pooled, proj)?;
    cache.insert((session_idx, turn_idx), x);
    Ok(x)
}

/// Context-encoded turn representation G_ij: the window of 2C+1 turn
/// vectors (zero-padded past session boundaries) through the turn BiLSTM.
pub fn encoder_output(
    graph: &mut Graph,
    stack: &BoundStack,
    vocab: &BTreeMap<String, usize>,
    session: &Session,
    session_idx: usize,
    turn_idx: usize,
    context_radius: usize,
    cache: &mut TurnVectorCache,
) -> Result<Var> {
    let c = context_radius as isize;
    let j = turn_idx as isize;
    let mut window = Vec::with_capacity(2 * context_radius + 1);
    for jj in (j - c)..=(j + c) {
        if jj < 0 || jj >= session.turns.len() as isize {
            window.push(graph.input(Tensor::zeros(vec![stack.turn_vector_dim()])));
        } else {
            window.push(turn_vector(
                graph,
                stack,
                vocab,
                session,
                session_idx,
                jj as usize,
                cache,
            )?);
        }
    }
    encode_turn_context(graph, &window, &stack.turn_fwd, &stack.turn_bwd)
}
