//! Mean-reduced losses with analytic gradients.

use super::dense::sigmoid;
use super::tensor::Tensor2;
use super::NumericError;

/// Mean squared error over all entries; gradient w.r.t. `pred`.
pub fn mse_loss(pred: &Tensor2, target: &Tensor2) -> Result<(f64, Tensor2), NumericError> {
    if pred.shape() != target.shape() {
        return Err(NumericError::ShapeMismatch {
            op: "mse_loss",
            expected: format!("{:?}", target.shape()),
            got: format!("{:?}", pred.shape()),
        });
    }
    let n = pred.data.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor2::zeros(pred.rows, pred.cols);
    for i in 0..pred.data.len() {
        let d = pred.data[i] - target.data[i];
        loss += d * d;
        grad.data[i] = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

/// Binary cross-entropy on raw logits, mean-reduced. The per-element loss
/// is softplus(l) − l·t computed in the overflow-safe form
/// max(l, 0) − l·t + ln(1 + exp(−|l|)); the gradient is (σ(l) − t)/n.
pub fn bce_with_logits(logits: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>), NumericError> {
    let weights = vec![1.0; logits.len()];
    bce_with_logits_weighted(logits, targets, &weights)
}

/// Weighted BCE: sum(w·loss)/sum(w) with matching gradient. Used where the
/// positive class is rare and needs up-weighting.
pub fn bce_with_logits_weighted(
    logits: &[f64],
    targets: &[f64],
    weights: &[f64],
) -> Result<(f64, Vec<f64>), NumericError> {
    if logits.len() != targets.len() || logits.len() != weights.len() {
        return Err(NumericError::ShapeMismatch {
            op: "bce_loss",
            expected: format!("{} targets/weights", logits.len()),
            got: format!("{}/{}", targets.len(), weights.len()),
        });
    }
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return Err(NumericError::ShapeMismatch {
            op: "bce_loss",
            expected: "positive weight sum".into(),
            got: format!("{wsum}"),
        });
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for i in 0..logits.len() {
        let l = logits[i];
        let t = targets[i];
        let w = weights[i];
        loss += w * (l.max(0.0) - l * t + (-l.abs()).exp().ln_1p());
        grad[i] = w * (sigmoid(l) - t) / wsum;
    }
    Ok((loss / wsum, grad))
}
