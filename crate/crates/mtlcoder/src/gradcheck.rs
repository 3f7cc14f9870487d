//! Central finite-difference oracle for checking analytic gradients.

use std::collections::BTreeMap;

use crate::tensor::Tensor;

/// Numerical gradient of `f` with respect to every parameter, by central
/// differences with step `eps`. `f` re-runs the forward pass from scratch
/// on each perturbed parameter set.
pub fn finite_diff_grads<F>(
    params: &BTreeMap<String, Tensor>,
    eps: f64,
    mut f: F,
) -> BTreeMap<String, Tensor>
where
    F: FnMut(&BTreeMap<String, Tensor>) -> f64,
{
    let mut out = BTreeMap::new();
    for name in params.keys() {
        let n = params[name].len();
        let mut grad = vec![0.0; n];
        for i in 0..n {
            let mut plus = params.clone();
            plus.get_mut(name).unwrap().data[i] += eps;
            let mut minus = params.clone();
            minus.get_mut(name).unwrap().data[i] -= eps;
            grad[i] = (f(&plus) - f(&minus)) / (2.0 * eps);
        }
        out.insert(
            name.clone(),
            Tensor::new(params[name].shape.clone(), grad).unwrap(),
        );
    }
    out
}

/// Relative-error comparison with an absolute floor for near-zero entries.
pub fn max_rel_error(analytic: &BTreeMap<String, Tensor>, numeric: &BTreeMap<String, Tensor>) -> f64 {
    let mut worst = 0.0f64;
    for (name, a) in analytic {
        let b = &numeric[name];
        for (x, y) in a.data.iter().zip(&b.data) {
            let denom = x.abs().max(y.abs()).max(1e-7);
            let err = (x - y).abs() / denom;
            if err > worst {
                worst = err;
            }
        }
    }
    worst
}
