use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Tensor;

/// Glorot (Xavier) uniform initialization: entries drawn from
/// U(-b, b) with b = sqrt(6 / (rows + cols)).
pub fn glorot_uniform_init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    assert!(rows > 0 && cols > 0, "extents must be positive");
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor {
        shape: vec![rows, cols],
        data,
        requires_grad: true,
    }
}
