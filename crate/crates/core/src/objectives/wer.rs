//! Token error rate via Levenshtein distance, with a corpus-level
//! accumulator (total edits over total reference length, not a mean of
//! per-utterance rates).

use crate::error::{Error, Result};

/// Minimum number of substitutions, insertions, and deletions turning
/// `reference` into `hypothesis`.
pub fn edit_distance(reference: &[usize], hypothesis: &[usize]) -> usize {
    if reference.is_empty() {
        return hypothesis.len();
    }
    if hypothesis.is_empty() {
        return reference.len();
    }
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut curr = vec![0usize; hypothesis.len() + 1];
    for (i, &r) in reference.iter().enumerate() {
        curr[0] = i + 1;
        for (j, &h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[hypothesis.len()]
}

/// Edit distance normalized by reference length. Errors on an empty
/// reference, where the rate is undefined.
pub fn token_error_rate(reference: &[usize], hypothesis: &[usize]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::contract(
            "token_error_rate: empty reference, rate is undefined",
        ));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// Pools edits and reference lengths across utterances.
#[derive(Debug, Default, Clone)]
pub struct ErrorRateAccumulator {
    edits: usize,
    reference_tokens: usize,
    utterances: usize,
}

impl ErrorRateAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, reference: &[usize], hypothesis: &[usize]) -> Result<()> {
        if reference.is_empty() {
            return Err(Error::contract(
                "error-rate accumulator: empty reference utterance",
            ));
        }
        self.edits += edit_distance(reference, hypothesis);
        self.reference_tokens += reference.len();
        self.utterances += 1;
        Ok(())
    }

    pub fn utterances(&self) -> usize {
        self.utterances
    }

    pub fn rate(&self) -> Result<f64> {
        if self.reference_tokens == 0 {
            return Err(Error::contract(
                "error-rate accumulator: no reference tokens accumulated",
            ));
        }
        Ok(self.edits as f64 / self.reference_tokens as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_deletion_against_two_token_reference() {
        // hypothesis [b] against reference [a, b]: one deletion, rate 0.5.
        let rate = token_error_rate(&[0, 1], &[1]).unwrap();
        assert!((rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn distance_is_symmetric_in_role_but_rate_is_not() {
        assert_eq!(edit_distance(&[0, 1, 2], &[0, 2]), 1);
        assert_eq!(edit_distance(&[0, 2], &[0, 1, 2]), 1);
        let a = token_error_rate(&[0, 1, 2], &[0, 2]).unwrap();
        let b = token_error_rate(&[0, 2], &[0, 1, 2]).unwrap();
        assert!((a - 1.0 / 3.0).abs() < 1e-12);
        assert!((b - 0.5).abs() < 1e-12);
    }

    #[test]
    fn substitution_insertion_deletion_all_cost_one() {
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 9, 3]), 1); // substitution
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 2, 3, 4]), 1); // insertion
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 3]), 1); // deletion
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 2, 3]), 0);
    }

    #[test]
    fn rate_can_exceed_one_with_enough_insertions() {
        let rate = token_error_rate(&[5], &[1, 2, 3]).unwrap();
        assert!(rate > 1.0);
    }

    #[test]
    fn corpus_rate_pools_edits_not_rates() {
        let mut acc = ErrorRateAccumulator::new();
        // 0 edits over 4 tokens, then 2 edits over 2 tokens: pooled rate is
        // 2/6, not the mean of 0.0 and 1.0.
        acc.push(&[1, 2, 3, 4], &[1, 2, 3, 4]).unwrap();
        acc.push(&[7, 8], &[9, 10]).unwrap();
        let rate = acc.rate().unwrap();
        assert!((rate - 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(acc.utterances(), 2);
    }

    #[test]
    fn empty_reference_is_rejected() {
        assert!(token_error_rate(&[], &[1]).is_err());
        assert!(ErrorRateAccumulator::new().rate().is_err());
    }
}
