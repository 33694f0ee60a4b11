//! Alignment-marginalized sequence loss (log-space forward algorithm),
//! its analytic gradient, a brute-force enumeration oracle, and the greedy
//! decoder.
//!
//! Conventions: per-frame log-probabilities are [T, V+1] with the blank as
//! the final class. A label sequence is produced from a frame sequence by
//! collapsing repeats and then removing blanks.

use crate::error::{Error, Result};
use crate::tensor::{fmt_shape, Tensor};

fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Frames needed to emit `targets`: one per symbol plus one separator blank
/// between equal neighbors.
pub fn min_frames(targets: &[usize]) -> usize {
    let repeats = targets.windows(2).filter(|w| w[0] == w[1]).count();
    targets.len() + repeats
}

fn validate(log_probs: &Tensor, targets: &[usize]) -> Result<(usize, usize)> {
    if log_probs.rank() != 2 || log_probs.shape()[1] < 2 {
        return Err(Error::shape(
            "ctc_loss",
            format!(
                "log-probs must be [T, V+1] with V ≥ 1, got {}",
                fmt_shape(log_probs.shape())
            ),
        ));
    }
    let t = log_probs.shape()[0];
    let classes = log_probs.shape()[1];
    let vocab = classes - 1;
    if let Some(&bad) = targets.iter().find(|&&s| s >= vocab) {
        return Err(Error::contract(format!(
            "ctc_loss: target symbol {bad} outside vocabulary of {vocab} (blank is reserved)"
        )));
    }
    let need = min_frames(targets);
    if t < need {
        return Err(Error::contract(format!(
            "ctc_loss: target needs at least {need} frames but only {t} are available"
        )));
    }
    Ok((t, vocab))
}

/// Label of extended-sequence state `s` (blanks interleaved around targets).
fn ext_label(targets: &[usize], blank: usize, s: usize) -> usize {
    if s % 2 == 0 {
        blank
    } else {
        targets[s / 2]
    }
}

fn forward_alphas(log_probs: &Tensor, targets: &[usize], blank: usize) -> Vec<Vec<f64>> {
    let t_frames = log_probs.shape()[0];
    let s_len = 2 * targets.len() + 1;
    let mut alpha = vec![vec![f64::NEG_INFINITY; s_len]; t_frames];
    alpha[0][0] = log_probs.at2(0, blank);
    if s_len > 1 {
        alpha[0][1] = log_probs.at2(0, ext_label(targets, blank, 1));
    }
    for t in 1..t_frames {
        for s in 0..s_len {
            let lab = ext_label(targets, blank, s);
            let mut acc = alpha[t - 1][s];
            if s >= 1 {
                acc = ln_add_exp(acc, alpha[t - 1][s - 1]);
            }
            if s >= 2 && lab != blank && lab != ext_label(targets, blank, s - 2) {
                acc = ln_add_exp(acc, alpha[t - 1][s - 2]);
            }
            alpha[t][s] = acc + log_probs.at2(t, lab);
        }
    }
    alpha
}

/// Negative log probability of `targets` given per-frame log-probs.
pub fn ctc_loss_value(log_probs: &Tensor, targets: &[usize]) -> Result<f64> {
    let (t_frames, vocab) = validate(log_probs, targets)?;
    let blank = vocab;
    let alpha = forward_alphas(log_probs, targets, blank);
    let s_len = 2 * targets.len() + 1;
    let mut total = alpha[t_frames - 1][s_len - 1];
    if s_len > 1 {
        total = ln_add_exp(total, alpha[t_frames - 1][s_len - 2]);
    }
    if total == f64::NEG_INFINITY {
        return Err(Error::Numerical(
            "ctc_loss: zero-probability target under the given frame distribution".to_string(),
        ));
    }
    Ok(-total)
}

/// Gradient of [`ctc_loss_value`] with respect to the log-probabilities:
/// minus the per-frame state-occupancy posteriors, shape [T, V+1].
pub fn ctc_loss_grad(log_probs: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let (t_frames, vocab) = validate(log_probs, targets)?;
    let blank = vocab;
    let classes = vocab + 1;
    let s_len = 2 * targets.len() + 1;
    let alpha = forward_alphas(log_probs, targets, blank);

    // Suffix probabilities, emission at t included.
    let mut beta = vec![vec![f64::NEG_INFINITY; s_len]; t_frames];
    beta[t_frames - 1][s_len - 1] = log_probs.at2(t_frames - 1, blank);
    if s_len > 1 {
        beta[t_frames - 1][s_len - 2] =
            log_probs.at2(t_frames - 1, ext_label(targets, blank, s_len - 2));
    }
    for t in (0..t_frames - 1).rev() {
        for s in 0..s_len {
            let lab = ext_label(targets, blank, s);
            let mut acc = beta[t + 1][s];
            if s + 1 < s_len {
                acc = ln_add_exp(acc, beta[t + 1][s + 1]);
            }
            if s + 2 < s_len {
                let nxt = ext_label(targets, blank, s + 2);
                if nxt != blank && nxt != lab {
                    acc = ln_add_exp(acc, beta[t + 1][s + 2]);
                }
            }
            beta[t][s] = acc + log_probs.at2(t, lab);
        }
    }

    let mut log_total = alpha[t_frames - 1][s_len - 1];
    if s_len > 1 {
        log_total = ln_add_exp(log_total, alpha[t_frames - 1][s_len - 2]);
    }
    if log_total == f64::NEG_INFINITY {
        return Err(Error::Numerical(
            "ctc_loss: zero-probability target under the given frame distribution".to_string(),
        ));
    }

    // Posterior mass through state s at frame t is
    // exp(α + β − emission − log_total); summed per class it is the expected
    // class occupancy, and d(−log P)/d log_prob[t][k] = −occupancy[t][k].
    let mut grad = vec![0.0; t_frames * classes];
    for t in 0..t_frames {
        for s in 0..s_len {
            let lab = ext_label(targets, blank, s);
            let mass =
                (alpha[t][s] + beta[t][s] - log_probs.at2(t, lab) - log_total).exp();
            grad[t * classes + lab] -= mass;
        }
    }
    Tensor::new(vec![t_frames, classes], grad)
}

/// Exhaustive oracle: sums the probability of every frame labeling that
/// collapses to `targets`. Only viable for tiny T and vocabulary; exists to
/// certify the dynamic program, not to be fast.
pub fn ctc_loss_brute_force(log_probs: &Tensor, targets: &[usize]) -> Result<f64> {
    let (t_frames, vocab) = validate(log_probs, targets)?;
    let classes = vocab + 1;
    if classes.pow(t_frames as u32) > 2_000_000 {
        return Err(Error::contract(
            "ctc_loss_brute_force: instance too large for exhaustive enumeration",
        ));
    }
    let blank = vocab;
    let mut path = vec![0usize; t_frames];
    let mut total = f64::NEG_INFINITY;
    loop {
        // Collapse repeats, drop blanks, compare.
        let mut collapsed = Vec::with_capacity(t_frames);
        let mut prev = usize::MAX;
        for &c in &path {
            if c != prev && c != blank {
                collapsed.push(c);
            }
            prev = c;
        }
        if collapsed == targets {
            let lp: f64 = path
                .iter()
                .enumerate()
                .map(|(t, &c)| log_probs.at2(t, c))
                .sum();
            total = ln_add_exp(total, lp);
        }
        // Odometer increment.
        let mut pos = 0;
        loop {
            if pos == t_frames {
                if total == f64::NEG_INFINITY {
                    return Err(Error::Numerical(
                        "ctc_loss_brute_force: no admissible path".to_string(),
                    ));
                }
                return Ok(-total);
            }
            path[pos] += 1;
            if path[pos] < classes {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

/// Per-frame argmax (ties to the lowest index), collapse repeats, drop
/// blanks.
pub fn greedy_decode(log_probs: &Tensor) -> Result<Vec<usize>> {
    if log_probs.rank() != 2 || log_probs.shape()[1] < 2 {
        return Err(Error::shape(
            "greedy_decode",
            format!("log-probs must be [T, V+1], got {}", fmt_shape(log_probs.shape())),
        ));
    }
    let classes = log_probs.shape()[1];
    let blank = classes - 1;
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for t in 0..log_probs.shape()[0] {
        let row = log_probs.row(t);
        let mut best = 0usize;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        if best != prev && best != blank {
            out.push(best);
        }
        prev = best;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_log_probs(t: usize, classes: usize) -> Tensor {
        Tensor::new(vec![t, classes], vec![(1.0 / classes as f64).ln(); t * classes]).unwrap()
    }

    #[test]
    fn two_frame_single_symbol_uniform_closed_form() {
        // T=2, V=2 (3 classes incl. blank), target [a]: admissible frame
        // labelings are (a,a), (a,-), (-,a), total probability 3·(1/9), so
        // the loss is ln 3.
        let lp = uniform_log_probs(2, 3);
        let loss = ctc_loss_value(&lp, &[0]).unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-6, "loss {loss}");
        let brute = ctc_loss_brute_force(&lp, &[0]).unwrap();
        assert!((loss - brute).abs() < 1e-9);
    }

    #[test]
    fn repeated_symbol_needs_separator_blank() {
        // T=3, target [a,a]: the only path is (a, -, a).
        let mut data = Vec::new();
        for t in 0..3 {
            for c in 0..3 {
                data.push(((t + 1) as f64 * 0.2 + c as f64 * 0.1).ln());
            }
        }
        // Build a proper normalized distribution instead of the ad-hoc one.
        let mut lp = Tensor::new(vec![3, 3], data).unwrap();
        for t in 0..3 {
            let row: Vec<f64> = lp.row(t).to_vec();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for c in 0..3 {
                lp.data_mut()[t * 3 + c] = row[c] - lse;
            }
        }
        let expected = -(lp.at2(0, 0) + lp.at2(1, 2) + lp.at2(2, 0));
        let loss = ctc_loss_value(&lp, &[0, 0]).unwrap();
        assert!((loss - expected).abs() < 1e-9, "{loss} vs {expected}");
        let brute = ctc_loss_brute_force(&lp, &[0, 0]).unwrap();
        assert!((loss - brute).abs() < 1e-9);
    }

    #[test]
    fn target_too_long_is_an_error_not_infinity() {
        let lp = uniform_log_probs(2, 3);
        assert!(matches!(
            ctc_loss_value(&lp, &[0, 0]),
            Err(Error::Contract(_))
        ));
        assert!(ctc_loss_value(&lp, &[0, 1]).is_ok());
    }

    #[test]
    fn target_symbol_outside_vocab_is_rejected() {
        let lp = uniform_log_probs(4, 3);
        assert!(ctc_loss_value(&lp, &[2]).is_err(), "blank index is reserved");
    }

    #[test]
    fn empty_target_scores_the_all_blank_path() {
        let lp = uniform_log_probs(3, 3);
        let loss = ctc_loss_value(&lp, &[]).unwrap();
        assert!((loss - 3.0 * 3.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn gradient_is_negative_occupancy_summing_to_one_per_frame() {
        let lp = uniform_log_probs(4, 3);
        let g = ctc_loss_grad(&lp, &[0, 1]).unwrap();
        for t in 0..4 {
            let s: f64 = g.row(t).iter().sum();
            assert!((s + 1.0).abs() < 1e-9, "frame {t} occupancy sums to {s}");
        }
    }

    #[test]
    fn greedy_decode_collapses_and_strips_blanks() {
        // Frames argmax to [a, -, a] → decoded [a, a].
        let lp = Tensor::new(
            vec![3, 3],
            vec![
                -0.1, -3.0, -2.0, // a
                -2.0, -3.0, -0.1, // blank
                -0.1, -3.0, -2.0, // a
            ],
        )
        .unwrap();
        assert_eq!(greedy_decode(&lp).unwrap(), vec![0, 0]);
        // Repeats without blank separator collapse: [b, b, a] → [b, a].
        let lp2 = Tensor::new(
            vec![3, 3],
            vec![
                -3.0, -0.1, -2.0, // b
                -3.0, -0.1, -2.0, // b
                -0.1, -3.0, -2.0, // a
            ],
        )
        .unwrap();
        assert_eq!(greedy_decode(&lp2).unwrap(), vec![1, 0]);
    }
}
