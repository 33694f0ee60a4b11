//! Equal error rate of a binary score-threshold detector, computed on the
//! false-accept / false-reject staircase with linear interpolation in rate
//! space. Working in rates (not thresholds) makes the result invariant
//! under any strictly monotone rescaling of the scores.

use crate::error::{Error, Result};

/// Rate at which false accepts equal false rejects. `positive` are scores
/// of same-class trials (should be high), `negative` of different-class
/// trials (should be low).
pub fn equal_error_rate(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::contract(
            "equal_error_rate: need at least one positive and one negative trial",
        ));
    }
    if positive
        .iter()
        .chain(negative)
        .any(|v| !v.is_finite())
    {
        return Err(Error::contract(
            "equal_error_rate: scores must be finite",
        ));
    }

    // Candidate thresholds: below everything, between every adjacent pair
    // of distinct scores, above everything. Accept means score >= theta.
    let mut all: Vec<f64> = positive.iter().chain(negative).copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    let mut thresholds = Vec::with_capacity(all.len() + 1);
    thresholds.push(all[0] - 1.0);
    for pair in all.windows(2) {
        thresholds.push(0.5 * (pair[0] + pair[1]));
    }
    thresholds.push(all[all.len() - 1] + 1.0);

    let rates = |theta: f64| -> (f64, f64) {
        let fa = negative.iter().filter(|&&s| s >= theta).count() as f64
            / negative.len() as f64;
        let fr = positive.iter().filter(|&&s| s < theta).count() as f64
            / positive.len() as f64;
        (fa, fr)
    };

    // Sweeping theta upward, fa falls 1 -> 0 and fr rises 0 -> 1, so
    // fa - fr crosses zero exactly once; interpolate between the two
    // operating points that bracket the crossing.
    let mut prev = rates(thresholds[0]);
    for &theta in &thresholds[1..] {
        let curr = rates(theta);
        let d_prev = prev.0 - prev.1;
        let d_curr = curr.0 - curr.1;
        if d_prev >= 0.0 && d_curr <= 0.0 {
            let denom = d_prev - d_curr;
            if denom <= f64::EPSILON {
                return Ok(0.5 * (prev.0 + prev.1));
            }
            let u = d_prev / denom;
            let fa = prev.0 + u * (curr.0 - prev.0);
            let fr = prev.1 + u * (curr.1 - prev.1);
            return Ok(0.5 * (fa + fr));
        }
        prev = curr;
    }
    // d starts at 1 - 0 >= 0 and ends at 0 - 1 <= 0, so a crossing always
    // exists; reaching here would mean the sweep above is wrong.
    Err(Error::Numerical(
        "equal_error_rate: no crossing found in threshold sweep".to_string(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three_with_one_swapped_pair() {
        // positives {0.9, 0.8, 0.4}, negatives {0.6, 0.2, 0.1}: one
        // positive sits below one negative, EER = 1/3.
        let eer = equal_error_rate(&[0.9, 0.8, 0.4], &[0.6, 0.2, 0.1]).unwrap();
        assert!((eer - 1.0 / 3.0).abs() < 1e-9, "got {eer}");
    }

    #[test]
    fn separable_scores_give_zero() {
        let eer = equal_error_rate(&[0.9, 0.7], &[0.3, 0.1]).unwrap();
        assert!(eer.abs() < 1e-12);
    }

    #[test]
    fn fully_reversed_scores_give_one() {
        let eer = equal_error_rate(&[0.1, 0.2], &[0.8, 0.9]).unwrap();
        assert!((eer - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invariant_under_strictly_monotone_rescaling() {
        let pos = [0.93, 0.81, 0.44, 0.71, 0.52];
        let neg = [0.63, 0.22, 0.12, 0.55, 0.48];
        let base = equal_error_rate(&pos, &neg).unwrap();
        let warp = |v: f64| (4.0 * v).tanh() * 3.0 - 1.0;
        let pos_w: Vec<f64> = pos.iter().map(|&v| warp(v)).collect();
        let neg_w: Vec<f64> = neg.iter().map(|&v| warp(v)).collect();
        let warped = equal_error_rate(&pos_w, &neg_w).unwrap();
        assert!(
            (base - warped).abs() < 1e-12,
            "monotone warp moved EER: {base} vs {warped}"
        );
    }

    #[test]
    fn interpolates_between_staircase_steps() {
        // No operating point has fa == fr here. The crossing is bracketed
        // by (fa 1/2, fr 1/3) and (fa 1/4, fr 1/3); interpolating the rate
        // difference to zero gives u = 2/3 and an EER of exactly 1/3,
        // which matches neither bracketing point's midpoint rate.
        let eer = equal_error_rate(&[0.7, 0.6, 0.3], &[0.5, 0.4, 0.35, 0.1]).unwrap();
        assert!((eer - 1.0 / 3.0).abs() < 1e-12, "got {eer}");
    }

    #[test]
    fn empty_side_is_rejected() {
        assert!(equal_error_rate(&[], &[0.1]).is_err());
        assert!(equal_error_rate(&[0.9], &[]).is_err());
    }
}
