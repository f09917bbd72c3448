use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Mean over classes of within-class top-1 accuracy.
///
/// Classes of `class_set` without any sample are left out of the mean.
pub fn per_class_top1(predictions: &[usize], labels: &[usize], class_set: &[usize]) -> Result<f64> {
    Ok(per_class_accuracies(predictions, labels, class_set)?.mean)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerClass {
    pub mean: f64,
    /// `(class, accuracy, samples)` for every class with at least one sample.
    pub classes: Vec<(usize, f64, usize)>,
}

pub fn per_class_accuracies(predictions: &[usize], labels: &[usize], class_set: &[usize]) -> Result<PerClass> {
    if class_set.is_empty() {
        return Err(Error::Invalid("per-class accuracy needs a non-empty class set".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut tally: BTreeMap<usize, (usize, usize)> = class_set.iter().map(|&c| (c, (0, 0))).collect();
    for (&p, &l) in predictions.iter().zip(labels) {
        let entry = tally
            .get_mut(&l)
            .ok_or_else(|| Error::Invalid(format!("label {l} is outside the class set")))?;
        entry.1 += 1;
        if p == l {
            entry.0 += 1;
        }
    }
    let classes: Vec<(usize, f64, usize)> = tally
        .into_iter()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(c, (ok, n))| (c, ok as f64 / n as f64, n))
        .collect();
    let mean = if classes.is_empty() {
        0.0
    } else {
        classes.iter().map(|c| c.1).sum::<f64>() / classes.len() as f64
    };
    Ok(PerClass { mean, classes })
}

/// `2US/(U+S)`, or 0 when both are 0. Equal inputs are returned unchanged.
pub fn harmonic_mean(u: f64, s: f64) -> f64 {
    if u + s == 0.0 {
        0.0
    } else if u == s {
        u
    } else {
        2.0 * u * s / (u + s)
    }
}

/// `(U, S, H)` from predictions on the unseen and seen test sets.
pub fn gzsl_metrics(
    pred_unseen: &[usize],
    labels_unseen: &[usize],
    unseen: &[usize],
    pred_seen: &[usize],
    labels_seen: &[usize],
    seen: &[usize],
) -> Result<(f64, f64, f64)> {
    let u = per_class_top1(pred_unseen, labels_unseen, unseen)?;
    let s = per_class_top1(pred_seen, labels_seen, seen)?;
    Ok((u, s, harmonic_mean(u, s)))
}
