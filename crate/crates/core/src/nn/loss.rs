use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Mean squared error and its gradient `2 (pred - target) / n`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape {
            context: "mse loss",
            expected: pred.shape().to_vec(),
            actual: target.shape().to_vec(),
        });
    }
    let n = pred.len() as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let mut total = 0.0;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        total += d * d;
        *g = 2.0 * d / n;
    }
    Ok((total / n, grad))
}
