use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax - onehot) / batch` with respect to the logits.
pub fn softmax_cross_entropy(logits: &DenseTensor, labels: &[usize]) -> Result<(f64, DenseTensor)> {
    if logits.order() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::shape(format!(
            "logits {:?} do not match {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let (batch, classes) = (logits.shape()[0], logits.shape()[1]);
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Label { label, classes });
    }
    let mut grad = vec![0.0; batch * classes];
    let mut loss = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        let row = &logits.data()[b * classes..(b + 1) * classes];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        let g = &mut grad[b * classes..(b + 1) * classes];
        for (gv, &v) in g.iter_mut().zip(row) {
            *gv = (v - log_z).exp() / batch as f64;
        }
        g[label] -= 1.0 / batch as f64;
    }
    Ok((loss / batch as f64, DenseTensor::matrix(batch, classes, grad)?))
}
