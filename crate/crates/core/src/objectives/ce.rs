//! Per-frame cross entropy over class logits: a pure evaluation and a tape
//! composite built from log-softmax and a one-hot mask (a reduction against
//! a constant mask needs no dedicated gather primitive).

use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::tensor::{fmt_shape, Tensor};

fn check_labels(shape: &[usize], labels: &[usize], op: &'static str) -> Result<(usize, usize)> {
    if shape.len() != 2 {
        return Err(Error::shape(
            op,
            format!("logits must be [T, C], got {}", fmt_shape(shape)),
        ));
    }
    let (t, classes) = (shape[0], shape[1]);
    if labels.len() != t {
        return Err(Error::shape(
            op,
            format!("{t} logit rows but {} labels", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::contract(format!(
            "{op}: label {bad} outside {classes} classes"
        )));
    }
    if t == 0 {
        return Err(Error::contract(format!("{op}: no frames")));
    }
    Ok((t, classes))
}

/// One-hot rows with `value` at each label position, shape [T, C].
pub fn one_hot_rows(labels: &[usize], classes: usize, value: f64) -> Tensor {
    let mut data = vec![0.0; labels.len() * classes];
    for (t, &l) in labels.iter().enumerate() {
        data[t * classes + l] = value;
    }
    Tensor::new(vec![labels.len(), classes], data).expect("one-hot shape is consistent")
}

/// Mean over frames of the negative log-probability of the labeled class.
pub fn frame_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let (t, _classes) = check_labels(logits.shape(), labels, "frame_cross_entropy")?;
    let mut total = 0.0;
    for (row_idx, &label) in labels.iter().enumerate() {
        let row = logits.row(row_idx);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total -= logits.at2(row_idx, label) - lse;
    }
    Ok(total / t as f64)
}

/// Tape composite of [`frame_cross_entropy`]: scalar loss differentiable
/// through the logits.
pub fn frame_cross_entropy_loss(
    tape: &mut Tape,
    logits: TensorId,
    labels: &[usize],
) -> Result<TensorId> {
    let shape = tape.value(logits).shape().to_vec();
    let (t, classes) = check_labels(&shape, labels, "frame_cross_entropy_loss")?;
    let log_probs = tape.log_softmax(logits)?;
    // The mask folds both the class selection and the -1/T normalization.
    let mask = tape.leaf(one_hot_rows(labels, classes, -1.0 / t as f64))?;
    let picked = tape.mul(log_probs, mask)?;
    tape.sum_all(picked)
}
