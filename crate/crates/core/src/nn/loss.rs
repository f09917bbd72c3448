use autodiff::Tensor;

use crate::error::{Error, Result};

/// One-hot `[B×C]` matrix for `labels`.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Invalid(format!("label {l} outside [0,{classes})")));
        }
        data[i * classes + l] = 1.0;
    }
    Ok(Tensor::new(&[labels.len(), classes], data)?)
}

/// `[B×1]` log-probability of each row's label.
pub fn label_log_probs(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::Invalid(format!(
            "logits {:?} do not match {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let mask = one_hot(labels, logits.shape()[1])?;
    Ok(logits.log_softmax()?.mul(&mask)?.sum_axis(1)?)
}

/// Batch mean of `−log softmax(logits)[label]`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    Ok(label_log_probs(logits, labels)?.mean().neg())
}
