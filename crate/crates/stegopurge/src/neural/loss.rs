//! Mean-reduced losses with analytic gradients.

use crate::error::{Error, Result};
use crate::neural::tensor::Tensor;
use crate::neural::Scalar;

/// Clamp bound for BCE probabilities.
const BCE_EPS: f64 = 1e-7;

/// Mean squared error. Returns the scalar loss (accumulated in f64) and the
/// gradient with respect to `pred`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "mse_loss: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.numel() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    let scale = T::from_f64(2.0 / n);
    for ((&p, &t), g) in pred
        .data()
        .iter()
        .zip(target.data())
        .zip(grad.data_mut())
    {
        let d = p - t;
        loss += d.to_f64() * d.to_f64();
        *g = scale * d;
    }
    Ok((loss / n, grad))
}

/// Binary cross-entropy against a uniform 0/1 label, inputs clamped to
/// `[1e-7, 1 - 1e-7]`. Returns the scalar loss and the gradient with respect
/// to `pred`.
pub fn bce_loss<T: Scalar>(pred: &Tensor<T>, label: f64) -> (f64, Tensor<T>) {
    debug_assert!(label == 0.0 || label == 1.0);
    let n = pred.numel() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    for (&p, g) in pred.data().iter().zip(grad.data_mut()) {
        let p = p.to_f64().clamp(BCE_EPS, 1.0 - BCE_EPS);
        loss -= label * p.ln() + (1.0 - label) * (1.0 - p).ln();
        *g = T::from_f64((p - label) / (p * (1.0 - p)) / n);
    }
    (loss / n, grad)
}
