//! Loss functions: multi-label binary cross entropy, inverse-frequency
//! sample weights, the task discriminator and its loss, the orthogonality
//! (diff) loss, and the combined multi-task objective.

use crate::corpus::LabelSet;
use crate::tensor::{Graph, Result, Tensor, TensorError, Var};

/// Posterior clipping bound applied before taking logarithms.
pub const BCE_CLIP: f64 = 1e-7;

/// Multi-label binary cross entropy of one sample:
/// -sum_l [ y_l log p_l + (1-y_l) log(1-p_l) ].
pub fn multilabel_bce(graph: &mut Graph, y: &[f64], posterior: Var) -> Result<Var> {
    if graph.value(posterior).len() != y.len() {
        return Err(TensorError::Usage(format!(
            "label length {} vs posterior length {}",
            y.len(),
            graph.value(posterior).len()
        )));
    }
    let p = graph.clip(posterior, BCE_CLIP, 1.0 - BCE_CLIP)?;
    let log_p = graph.log(p)?;
    let neg_p = graph.scale(p, -1.0)?;
    let one_minus_p = graph.add_const(neg_p, 1.0)?;
    let log_q = graph.log(one_minus_p)?;
    let yv = graph.input(Tensor::vector(y.to_vec()));
    let y1 = graph.input(Tensor::vector(y.iter().map(|v| 1.0 - v).collect()));
    let pos = graph.mul(yv, log_p)?;
    let neg = graph.mul(y1, log_q)?;
    let both = graph.add(pos, neg)?;
    let sum = graph.sum_all(both)?;
    graph.scale(sum, -1.0)
}

/// Per-label positive/negative counts over the training split and the
/// derived inverse-frequency ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeightTable {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    pub ratio: Vec<f64>,
    pub n_samples: usize,
}

impl SampleWeightTable {
    /// Mean over labels of the per-label weight: ratio for positive bits, 1 otherwise.
    pub fn weight(&self, labels: &LabelSet) -> f64 {
        let l = self.ratio.len();
        assert_eq!(labels.len(), l, "label set length mismatch");
        let sum: f64 = labels
            .bits
            .iter()
            .zip(&self.ratio)
            .map(|(&bit, &r)| if bit == 1 { r } else { 1.0 })
            .sum();
        sum / l as f64
    }
}

/// Count positives and negatives per label over the training split and
/// compute the positive-bit ratio (#negatives / #positives). A label with
/// no positives gets its ratio capped at the number of training samples.
pub fn compute_sample_weights(train_labels: &[LabelSet]) -> Result<SampleWeightTable> {
    if train_labels.is_empty() {
        return Err(TensorError::Usage(
            "sample weights over an empty training split".to_string(),
        ));
    }
    let l = train_labels[0].len();
    let n = train_labels.len();
    let mut positives = vec![0usize; l];
    for labels in train_labels {
        if labels.len() != l {
            return Err(TensorError::Usage(
                "inconsistent label set lengths".to_string(),
            ));
        }
        for (i, &bit) in labels.bits.iter().enumerate() {
            positives[i] += bit as usize;
        }
    }
    let negatives: Vec<usize> = positives.iter().map(|&p| n - p).collect();
    let ratio: Vec<f64> = positives
        .iter()
        .zip(&negatives)
        .enumerate()
        .map(|(i, (&p, &ng))| {
            if p == 0 {
                log::warn!("label {i} has no positives in the training split; ratio capped at {n}");
                n as f64
            } else {
                ng as f64 / p as f64
            }
        })
        .collect();
    Ok(SampleWeightTable {
        positives,
        negatives,
        ratio,
        n_samples: n,
    })
}

/// Weighted batch loss: sum of per-sample losses scaled by their weights.
pub fn weighted_loss(graph: &mut Graph, losses: &[(Var, f64)]) -> Result<Var> {
    if losses.is_empty() {
        return Err(TensorError::Usage("weighted_loss of no samples".to_string()));
    }
    let mut total = None;
    for &(loss, w) in losses {
        let scaled = graph.scale(loss, w)?;
        total = Some(match total {
            None => scaled,
            Some(t) => graph.add(t, scaled)?,
        });
    }
    Ok(total.unwrap())
}

/// Task discriminator: single feed-forward layer with a sigmoid activation
/// over the shared-encoder output (which should pass through gradient
/// reversal before reaching it).
pub fn task_discriminator(graph: &mut Graph, g_shared: Var, u_t: Var, b_t: Var) -> Result<Var> {
    let affine = graph.matmul(u_t, g_shared)?;
    let pre = graph.add(affine, b_t)?;
    graph.sigmoid(pre)
}

/// Binary cross entropy between the reference task label and the
/// discriminator posterior for one sample.
pub fn task_loss(graph: &mut Graph, task_label: f64, posterior: Var) -> Result<Var> {
    multilabel_bce(graph, &[task_label], posterior)
}

/// Orthogonality constraint for one task: squared Frobenius norm of
/// (G_shared^T G_task) over batch-stacked encoder outputs.
pub fn diff_loss(graph: &mut Graph, g_shared: Var, g_task: Var) -> Result<Var> {
    let (s, t) = (graph.value(g_shared), graph.value(g_task));
    if s.shape.len() != 2 || t.shape.len() != 2 || s.shape[0] != t.shape[0] {
        return Err(TensorError::Shape(format!(
            "diff_loss: {:?} vs {:?} (batch rows must match)",
            s.shape, t.shape
        )));
    }
    let st = graph.transpose(g_shared)?;
    let cross = graph.matmul(st, g_task)?;
    graph.sq_frob_norm(cross)
}

/// Combined multi-task objective: sum_m E_m + lambda*E_task + gamma*E_diff.
pub fn total_multitask_loss(
    graph: &mut Graph,
    task_losses: &[Var],
    e_task: Var,
    e_diff: Var,
    lambda: f64,
    gamma: f64,
) -> Result<Var> {
    let mut total = None;
    for &l in task_losses {
        total = Some(match total {
            None => l,
            Some(t) => graph.add(t, l)?,
        });
    }
    let mut total =
        total.ok_or_else(|| TensorError::Usage("no task losses".to_string()))?;
    let lt = graph.scale(e_task, lambda)?;
    total = graph.add(total, lt)?;
    let ld = graph.scale(e_diff, gamma)?;
    graph.add(total, ld)
}

#[cfg(test)]
mod tests;
