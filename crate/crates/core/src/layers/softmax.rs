use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Mean cross-entropy of `softmax(logits)` against integer labels.
///
/// Returns the loss and its gradient `(softmax - onehot) / batch`.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, classes) = logits.rows();
    if labels.len() != n || n == 0 {
        return Err(Error::dim(format!(
            "{} labels for a batch of {n} logit rows",
            labels.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&[n, classes]);
    for ((row, g), &label) in logits
        .data()
        .chunks_exact(classes)
        .zip(grad.data_mut().chunks_exact_mut(classes))
        .zip(labels)
    {
        if label >= classes {
            return Err(Error::domain(format!("label {label} outside [0, {classes})")));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (gi, &v) in g.iter_mut().zip(row) {
            *gi = (v - max).exp();
            z += *gi;
        }
        loss += z.ln() - (row[label] - max);
        for gi in g.iter_mut() {
            *gi /= z * n as f64;
        }
        g[label] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}
