use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. logits.
///
/// `logits` is `(N, K, 1, 1)` (any layout with per-sample length `K`).
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let s = logits.shape();
    let (batch, k) = (s.n, s.sample_len());
    if labels.len() != batch {
        return Err(Error::Data(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if batch == 0 {
        return Err(Error::Data("empty batch".into()));
    }
    let mut grad = Tensor::zeros(s);
    let mut loss = 0.0;
    for (n, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::Data(format!("label {label} outside [0, {k})")));
        }
        let row = logits.sample(n);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        loss += -(row[label] - max - log_sum);
        let g = grad.sample_mut(n);
        for (j, (gj, &v)) in g.iter_mut().zip(row).enumerate() {
            let p = (v - max - log_sum).exp();
            *gj = (p - if j == label { 1.0 } else { 0.0 }) / batch as f64;
        }
    }
    Ok((loss / batch as f64, grad))
}
