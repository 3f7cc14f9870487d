//! Hierarchical encoders: embedding lookup, LSTM cell, bidirectional word
//! encoder with mean pooling, and the role-aware turn/context encoder.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::corpus::SpeakerRole;
use crate::tensor::{glorot_uniform_init, Graph, Result, Tensor, TensorError, Var};

/// Token-to-row mapping plus the embedding matrix. Rows 0 and 1 are
/// reserved for padding and unknown tokens.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub matrix: Tensor,
    pub index: BTreeMap<String, usize>,
}

pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

impl EmbeddingTable {
    pub fn vocab_size(&self) -> usize {
        self.matrix.shape[0]
    }

    pub fn lookup(&self, token: &str) -> usize {
        *self.index.get(token).unwrap_or(&UNK_INDEX)
    }

    /// Fresh Glorot-initialized table over the given vocabulary map.
    /// The padding row is zeroed.
    pub fn init(index: BTreeMap<String, usize>, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let rows = index.values().max().map_or(UNK_INDEX, |m| *m) + 1;
        let mut matrix = glorot_uniform_init(rows, dim, rng);
        for j in 0..dim {
            matrix.data[PAD_INDEX * dim + j] = 0.0;
        }
        EmbeddingTable { dim, matrix, index }
    }
}

/// LSTM gate parameters for one direction. Weight matrices act on the
/// concatenation [x ; h_prev].
pub struct LstmVars {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_input: Var,
    pub w_forget: Var,
    pub w_output: Var,
    pub w_cell: Var,
    pub b_input: Var,
    pub b_forget: Var,
    pub b_output: Var,
    pub b_cell: Var,
}

const GATE_NAMES: [&str; 4] = ["input", "forget", "output", "cell"];

/// Insert freshly initialized LSTM parameters into `store` under `prefix`.
pub fn init_lstm_params(
    store: &mut BTreeMap<String, Tensor>,
    prefix: &str,
    input_dim: usize,
    hidden_dim: usize,
    rng: &mut ChaCha8Rng,
) {
    for gate in GATE_NAMES {
        store.insert(
            format!("{prefix}.w_{gate}"),
            glorot_uniform_init(hidden_dim, input_dim + hidden_dim, rng),
        );
        store.insert(
            format!("{prefix}.b_{gate}"),
            Tensor::zeros(vec![hidden_dim]).with_grad(),
        );
    }
}

impl LstmVars {
    /// Bind parameters named `{prefix}.w_input` etc. from `store` into the graph.
    pub fn bind(
        graph: &mut Graph,
        store: &BTreeMap<String, Tensor>,
        prefix: &str,
    ) -> Result<LstmVars> {
        let fetch = |store: &BTreeMap<String, Tensor>, key: String| -> Result<Tensor> {
            store
                .get(&key)
                .cloned()
                .ok_or_else(|| TensorError::Usage(format!("missing parameter '{key}'")))
        };
        let w_input_t = fetch(store, format!("{prefix}.w_input"))?;
        let hidden_dim = w_input_t.shape[0];
        let input_dim = w_input_t.shape[1] - hidden_dim;
        let mut ws = Vec::new();
        let mut bs = Vec::new();
        for gate in GATE_NAMES {
            let w = fetch(store, format!("{prefix}.w_{gate}"))?;
            let b = fetch(store, format!("{prefix}.b_{gate}"))?;
            ws.push(graph.param(&format!("{prefix}.w_{gate}"), &w)?);
            bs.push(graph.param(&format!("{prefix}.b_{gate}"), &b)?);
        }
        Ok(LstmVars {
            input_dim,
            hidden_dim,
            w_input: ws[0],
            w_forget: ws[1],
            w_output: ws[2],
            w_cell: ws[3],
            b_input: bs[0],
            b_forget: bs[1],
            b_output: bs[2],
            b_cell: bs[3],
        })
    }
}

/// Standard LSTM recurrence: sigmoid gates, tanh candidate and output squashing.
pub fn lstm_step(
    graph: &mut Graph,
    params: &LstmVars,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let z = graph.concat(x, h_prev)?;
    let gate = |graph: &mut Graph, w: Var, b: Var| -> Result<Var> {
        let a = graph.matmul(w, z)?;
        graph.add(a, b)
    };
    let pre_i = gate(graph, params.w_input, params.b_input)?;
    let i = graph.sigmoid(pre_i)?;
    let pre_f = gate(graph, params.w_forget, params.b_forget)?;
    let f = graph.sigmoid(pre_f)?;
    let pre_o = gate(graph, params.w_output, params.b_output)?;
    let o = graph.sigmoid(pre_o)?;
    let pre_u = gate(graph, params.w_cell, params.b_cell)?;
    let u = graph.tanh(pre_u)?;
    let fc = graph.mul(f, c_prev)?;
    let iu = graph.mul(i, u)?;
    let c = graph.add(fc, iu)?;
    let tc = graph.tanh(c)?;
    let h = graph.mul(o, tc)?;
    Ok((h, c))
}

/// BiLSTM over a sequence of input vectors with mean pooling: at each
/// position the forward and backward hidden states are concatenated, and
/// the per-position vectors are averaged over time.
pub fn bilstm_mean_pool(
    graph: &mut Graph,
    fwd: &LstmVars,
    bwd: &LstmVars,
    inputs: &[Var],
) -> Result<Var> {
    if inputs.is_empty() {
        return Err(TensorError::Usage(
            "bilstm over an empty sequence".to_string(),
        ));
    }
    let zero = |graph: &mut Graph, dim: usize| graph.input(Tensor::zeros(vec![dim]));
    let mut h = zero(graph, fwd.hidden_dim);
    let mut c = zero(graph, fwd.hidden_dim);
    let mut fwd_states = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let (nh, nc) = lstm_step(graph, fwd, x, h, c)?;
        h = nh;
        c = nc;
        fwd_states.push(nh);
    }
    let mut h = zero(graph, bwd.hidden_dim);
    let mut c = zero(graph, bwd.hidden_dim);
    let mut bwd_states = vec![fwd_states[0]; inputs.len()];
    for (t, &x) in inputs.iter().enumerate().rev() {
        let (nh, nc) = lstm_step(graph, bwd, x, h, c)?;
        h = nh;
        c = nc;
        bwd_states[t] = nh;
    }
    let mut per_step = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        per_step.push(graph.concat(fwd_states[t], bwd_states[t])?);
    }
    let stacked = graph.stack_rows(&per_step)?;
    graph.mean_rows(stacked)
}

/// Word encoder: embed each token and run the mean-pooled BiLSTM,
/// yielding a 2*hidden_dim turn summary.
pub fn encode_words(
    graph: &mut Graph,
    embedding: Var,
    token_rows: &[usize],
    fwd: &LstmVars,
    bwd: &LstmVars,
) -> Result<Var> {
    if token_rows.is_empty() {
        return Err(TensorError::Usage("encode_words on empty turn".to_string()));
    }
    let mut xs = Vec::with_capacity(token_rows.len());
    for &row in token_rows {
        xs.push(graph.row_select(embedding, row)?);
    }
    bilstm_mean_pool(graph, fwd, bwd, &xs)
}

/// Turn/context encoder: BiLSTM with mean pooling over a window of
/// 2C+1 turn vectors (zero-padded beyond session boundaries).
pub fn encode_turn_context(
    graph: &mut Graph,
    window: &[Var],
    fwd: &LstmVars,
    bwd: &LstmVars,
) -> Result<Var> {
    bilstm_mean_pool(graph, fwd, bwd, window)
}

/// One-hot encoding of the speaker role: therapist = [1,0], client = [0,1].
pub fn role_one_hot(role: SpeakerRole) -> Tensor {
    match role {
        SpeakerRole::Therapist => Tensor::vector(vec![1.0, 0.0]),
        SpeakerRole::Client => Tensor::vector(vec![0.0, 1.0]),
    }
}

/// Affine projection of the one-hot speaker role.
pub fn role_projection(graph: &mut Graph, role: Var, u_x: Var, b_x: Var) -> Result<Var> {
    let p = graph.matmul(u_x, role)?;
    graph.add(p, b_x)
}
