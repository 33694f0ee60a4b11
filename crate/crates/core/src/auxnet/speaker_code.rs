//! Speaker-code encoder: a trainable per-speaker embedding table for the
//! speaker-closed condition.

use rand_chacha::ChaCha8Rng;

use super::{EmbeddingSource, SpeakerEmbedding};
use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::models::Linear;
use crate::params::{HasParams, Param};

/// Embedding table over the training roster followed by linear + ReLU.
/// Only speakers seen in training have a row, so this encoder is usable in
/// the speaker-closed condition only.
#[derive(Debug, Clone)]
pub struct SpeakerCodeEncoder {
    roster: Vec<u32>,
    table: Param,
    linear: Linear,
}

impl SpeakerCodeEncoder {
    pub fn new(name: &str, roster: &[u32], d_emb: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if roster.is_empty() {
            return Err(Error::config("speaker-code roster must not be empty"));
        }
        let mut sorted = roster.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != roster.len() {
            return Err(Error::config("speaker-code roster contains duplicate ids"));
        }
        let table = Param::randn(
            format!("{name}.table"),
            &[roster.len(), d_emb],
            1.0 / libm::sqrt(d_emb as f64),
            rng,
        );
        let linear = Linear::new(&format!("{name}.proj"), d_emb, d_emb, rng);
        Ok(SpeakerCodeEncoder { roster: roster.to_vec(), table, linear })
    }

    pub fn d_emb(&self) -> usize {
        self.linear.d_out()
    }

    pub fn roster(&self) -> &[u32] {
        &self.roster
    }

    fn row_of(&self, speaker_id: u32) -> Result<usize> {
        self.roster.iter().position(|&s| s == speaker_id).ok_or_else(|| {
            Error::contract(format!(
                "speaker {speaker_id} is not in the training roster; the speaker-code \
                 encoder is only applicable in a speaker-closed condition"
            ))
        })
    }

    /// On-tape embedding for a training-roster speaker.
    pub fn encode(&self, tape: &mut Tape, speaker_id: u32) -> Result<TensorId> {
        let row = self.row_of(speaker_id)?;
        let table = tape.param(&self.table)?;
        let code = tape.embedding_lookup(table, row)?;
        let h = self.linear.apply(tape, code)?;
        tape.relu(h)
    }

    /// Off-tape convenience returning a concrete embedding.
    pub fn encode_value(&self, speaker_id: u32) -> Result<SpeakerEmbedding> {
        let mut tape = Tape::new();
        let out = self.encode(&mut tape, speaker_id)?;
        SpeakerEmbedding::new(EmbeddingSource::SpeakerCode, tape.value(out).data().to_vec())
    }
}

impl HasParams for SpeakerCodeEncoder {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.table);
        self.linear.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.table);
        self.linear.visit_params_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    use crate::auxnet::D_EMB;

    fn encoder() -> SpeakerCodeEncoder {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let roster: Vec<u32> = (0..8).collect();
        SpeakerCodeEncoder::new("spk_code", &roster, D_EMB, &mut rng).unwrap()
    }

    #[test]
    fn same_id_twice_gives_identical_embeddings() {
        let enc = encoder();
        let a = enc.encode_value(3).unwrap();
        let b = enc.encode_value(3).unwrap();
        assert_eq!(a.vector, b.vector);
    }

    #[test]
    fn output_is_elementwise_non_negative() {
        let enc = encoder();
        for id in 0..8 {
            let emb = enc.encode_value(id).unwrap();
            assert_eq!(emb.dim(), D_EMB);
            assert!(emb.vector.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn unknown_speaker_is_rejected_citing_the_closed_condition() {
        let enc = encoder();
        let err = enc.encode_value(99).unwrap_err();
        assert!(err.to_string().contains("speaker-closed"));
    }

    #[test]
    fn distinct_speakers_get_distinct_embeddings() {
        let enc = encoder();
        let a = enc.encode_value(0).unwrap();
        let b = enc.encode_value(1).unwrap();
        assert!(a.vector != b.vector);
    }

    #[test]
    fn gradients_reach_only_the_looked_up_table_row() {
        let enc = encoder();
        let mut tape = Tape::new();
        let out = enc.encode(&mut tape, 2).unwrap();
        let loss = tape.sum_all(out).unwrap();
        let grads = tape.backward(loss).unwrap();
        let table_grad = grads.by_name("spk_code.table").unwrap();
        for r in 0..8 {
            let nonzero = table_grad.row(r).iter().any(|&v| v != 0.0);
            assert_eq!(nonzero, r == 2, "row {r}");
        }
        assert!(grads.by_name("spk_code.proj.w").is_some());
    }

    #[test]
    fn duplicate_roster_ids_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        assert!(SpeakerCodeEncoder::new("s", &[1, 1, 2], D_EMB, &mut rng).is_err());
        assert!(SpeakerCodeEncoder::new("s", &[], D_EMB, &mut rng).is_err());
    }
}
