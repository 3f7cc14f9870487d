use std::collections::BTreeMap;

use super::{Result, Tensor, TensorError};

/// Optimizer state: per-parameter first and second moment accumulators.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        AdamState {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f64]> {
        self.m.get(name).map(|v| v.as_slice())
    }
}

/// One bias-corrected adam update over every parameter in `grads`.
pub fn adam_step(
    params: &mut BTreeMap<String, Tensor>,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
) -> Result<()> {
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);
    for (name, grad) in grads {
        let param = params.get_mut(name).ok_or_else(|| {
            TensorError::Usage(format!("gradient for unknown parameter '{name}'"))
        })?;
        if param.shape != grad.shape {
            return Err(TensorError::Shape(format!(
                "adam: parameter '{name}' has shape {:?}, gradient {:?}",
                param.shape, grad.shape
            )));
        }
        let n = param.len();
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        if m.len() != n {
            return Err(TensorError::Shape(format!(
                "adam: accumulator for '{name}' has length {}, parameter {}",
                m.len(),
                n
            )));
        }
        for i in 0..n {
            let g = grad.data[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            param.data[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}
