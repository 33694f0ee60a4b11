//! Token scripts: the symbolic content of an utterance. Tokens come from a
//! ten-symbol alphabet, last 120 ms each, and are separated by short
//! silences of 0–40 ms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::speaker::N_TOKENS;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Samples per token at 8 kHz (120 ms).
pub const TOKEN_SAMPLES: usize = 960;
/// Maximum inter-token silence in samples (40 ms).
pub const MAX_GAP_SAMPLES: usize = 320;
pub const MIN_SCRIPT_LEN: usize = 5;
pub const MAX_SCRIPT_LEN: usize = 15;

/// A sequence of 5–15 tokens with the silence lengths between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenScript {
    pub tokens: Vec<usize>,
    /// Silence between token i and i+1, in samples; length = tokens - 1.
    pub gaps: Vec<usize>,
}

impl TokenScript {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_SCRIPT_LEN..=MAX_SCRIPT_LEN).contains(&self.tokens.len()) {
            return Err(Error::contract(format!(
                "script length {} outside [{MIN_SCRIPT_LEN}, {MAX_SCRIPT_LEN}]",
                self.tokens.len()
            )));
        }
        if let Some(&bad) = self.tokens.iter().find(|&&t| t >= N_TOKENS) {
            return Err(Error::contract(format!(
                "token {bad} outside alphabet of {N_TOKENS}"
            )));
        }
        if self.gaps.len() + 1 != self.tokens.len() {
            return Err(Error::contract(format!(
                "{} tokens need {} gaps, got {}",
                self.tokens.len(),
                self.tokens.len() - 1,
                self.gaps.len()
            )));
        }
        if let Some(&bad) = self.gaps.iter().find(|&&g| g > MAX_GAP_SAMPLES) {
            return Err(Error::contract(format!(
                "gap of {bad} samples exceeds the {MAX_GAP_SAMPLES}-sample maximum"
            )));
        }
        Ok(())
    }

    /// Total samples the rendered utterance occupies before end padding.
    pub fn raw_samples(&self) -> usize {
        self.tokens.len() * TOKEN_SAMPLES + self.gaps.iter().sum::<usize>()
    }
}

/// Draw the script for one (speaker, utterance index) pair.
pub fn sample_script(corpus_seed: u64, speaker_id: usize, utt_index: usize) -> TokenScript {
    let mut r = rng::stream(
        corpus_seed,
        &[tag::SCRIPT, speaker_id as u64, utt_index as u64],
    );
    let len = r.random_range(MIN_SCRIPT_LEN..=MAX_SCRIPT_LEN);
    let tokens: Vec<usize> = (0..len).map(|_| r.random_range(0..N_TOKENS)).collect();
    let gaps: Vec<usize> = (0..len - 1)
        .map(|_| r.random_range(0..=MAX_GAP_SAMPLES))
        .collect();
    TokenScript { tokens, gaps }
}
