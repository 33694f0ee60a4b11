//! Mean average precision for per-frame multi-class scoring: one ranked
//! list per class, averaged (macro) over classes.

use crate::error::{Error, Result};
use crate::tensor::{fmt_shape, Tensor};

/// Average precision of one ranked list: mean of precision-at-rank over the
/// positive items. Ties are broken by original index so the result never
/// depends on sort internals.
pub fn average_precision(scores: &[f64], is_positive: &[bool]) -> Result<f64> {
    if scores.len() != is_positive.len() {
        return Err(Error::shape(
            "average_precision",
            format!(
                "{} scores but {} labels",
                scores.len(),
                is_positive.len()
            ),
        ));
    }
    let positives = is_positive.iter().filter(|&&p| p).count();
    if positives == 0 {
        return Err(Error::contract(
            "average_precision: no positive items, the metric is undefined",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores must be finite")
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut sum_precision = 0.0;
    for (rank0, &idx) in order.iter().enumerate() {
        if is_positive[idx] {
            hits += 1;
            sum_precision += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(sum_precision / positives as f64)
}

/// Macro-averaged AP over classes. `scores` is [N, C]; `labels[i]` names
/// the true class of item i. Every class in `0..C` must occur at least
/// once, otherwise its ranked list has no positives and the mean is
/// undefined — that is reported as an error naming the class.
pub fn mean_average_precision(scores: &Tensor, labels: &[usize]) -> Result<f64> {
    if scores.rank() != 2 {
        return Err(Error::shape(
            "mean_average_precision",
            format!("scores must be [N, C], got {}", fmt_shape(scores.shape())),
        ));
    }
    let (n, classes) = (scores.shape()[0], scores.shape()[1]);
    if labels.len() != n {
        return Err(Error::shape(
            "mean_average_precision",
            format!("{n} score rows but {} labels", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::contract(format!(
            "mean_average_precision: label {bad} outside {classes} classes"
        )));
    }
    let mut total = 0.0;
    for class in 0..classes {
        if !labels.iter().any(|&l| l == class) {
            return Err(Error::contract(format!(
                "mean_average_precision: class {class} has no positive items"
            )));
        }
        let column: Vec<f64> = (0..n).map(|i| scores.at2(i, class)).collect();
        let positives: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        total += average_precision(&column, &positives)?;
    }
    Ok(total / classes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_positive_at_the_bottom_of_four() {
        // One positive ranked last of 4: AP = 1/4.
        let scores = [0.9, 0.8, 0.7, 0.1];
        let positives = [false, false, false, true];
        let ap = average_precision(&scores, &positives).unwrap();
        assert!((ap - 0.25).abs() < 1e-12);
    }

    #[test]
    fn perfect_ranking_scores_one() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let positives = [true, true, false, false];
        let ap = average_precision(&scores, &positives).unwrap();
        assert!((ap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interleaved_ranking_hand_computed() {
        // Ranked: P N P N → (1/1 + 2/3) / 2 = 5/6.
        let scores = [0.9, 0.8, 0.7, 0.6];
        let positives = [true, false, true, false];
        let ap = average_precision(&scores, &positives).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn ties_resolve_by_original_index() {
        // Equal scores: index order decides, so the positive at index 0
        // ranks first and AP is 1, while moving it to index 1 halves
        // precision at its rank.
        let ap_first = average_precision(&[0.5, 0.5], &[true, false]).unwrap();
        let ap_second = average_precision(&[0.5, 0.5], &[false, true]).unwrap();
        assert!((ap_first - 1.0).abs() < 1e-12);
        assert!((ap_second - 0.5).abs() < 1e-12);
    }

    #[test]
    fn macro_mean_over_three_classes() {
        // 3 items, 3 classes, scores put each item's own class on top:
        // every per-class AP is 1.
        let scores = Tensor::new(
            vec![3, 3],
            vec![
                0.9, 0.05, 0.05, //
                0.1, 0.8, 0.1, //
                0.2, 0.2, 0.6,
            ],
        )
        .unwrap();
        let map = mean_average_precision(&scores, &[0, 1, 2]).unwrap();
        assert!((map - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_class_is_an_error_naming_the_class() {
        let scores = Tensor::new(vec![2, 3], vec![0.9, 0.05, 0.05, 0.1, 0.8, 0.1]).unwrap();
        let err = mean_average_precision(&scores, &[0, 0]).unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
    }

    #[test]
    fn no_positives_is_an_error() {
        assert!(average_precision(&[0.1, 0.2], &[false, false]).is_err());
    }
}
