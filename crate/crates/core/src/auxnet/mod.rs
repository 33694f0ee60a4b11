//! Auxiliary speaker-embedding networks.
//!
//! Three trainable encoder families turn enrollment material into a fixed-size
//! speaker embedding: a filterbank encoder with temporal average pooling, a
//! speaker-code table for the speaker-closed condition, and multi-head
//! factorised attention over the frozen upstream's layer stack.  A fourth
//! source imports externally computed embeddings from CSV.

mod external;
mod fbank_enc;
mod mhfa;
mod speaker_code;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use external::{load_external_embeddings, write_external_embeddings};
pub use fbank_enc::FbankAuxEncoder;
pub use mhfa::{MhfaConfig, MhfaEncoder};
pub use speaker_code::SpeakerCodeEncoder;

/// Default speaker-embedding width.
pub const D_EMB: usize = 32;

/// Which encoder family produced an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Fbank,
    SpeakerCode,
    Mhfa,
    External,
}

impl EmbeddingSource {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingSource::Fbank => "fbank",
            EmbeddingSource::SpeakerCode => "speaker_code",
            EmbeddingSource::Mhfa => "mhfa",
            EmbeddingSource::External => "external",
        }
    }
}

impl std::str::FromStr for EmbeddingSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fbank" => Ok(EmbeddingSource::Fbank),
            "speaker_code" => Ok(EmbeddingSource::SpeakerCode),
            "mhfa" => Ok(EmbeddingSource::Mhfa),
            "external" => Ok(EmbeddingSource::External),
            other => Err(Error::config(format!(
                "unknown embedding source '{other}' (expected fbank, speaker_code, mhfa, or external)"
            ))),
        }
    }
}

/// A fixed-size speaker embedding and the encoder family it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEmbedding {
    pub source: EmbeddingSource,
    pub vector: Vec<f64>,
}

impl SpeakerEmbedding {
    pub fn new(source: EmbeddingSource, vector: Vec<f64>) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::contract("speaker embedding must not be empty"));
        }
        if let Some(v) = vector.iter().find(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!(
                "speaker embedding ({}) contains {v}",
                source.as_str()
            )));
        }
        Ok(SpeakerEmbedding { source, vector })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::vector(self.vector.clone())
    }

    /// Cosine similarity in [-1, 1].  A zero-norm side scores 0, the neutral
    /// value for trial scoring.
    pub fn cosine(&self, other: &SpeakerEmbedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::shape(
                "cosine",
                format!("embedding dims differ: {} vs {}", self.dim(), other.dim()),
            ));
        }
        let dot: f64 = self.vector.iter().zip(&other.vector).map(|(a, b)| a * b).sum();
        let na: f64 = self.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = other.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if na < 1e-12 || nb < 1e-12 {
            return Ok(0.0);
        }
        Ok(dot / (na * nb))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_tags_round_trip_through_strings() {
        for src in [
            EmbeddingSource::Fbank,
            EmbeddingSource::SpeakerCode,
            EmbeddingSource::Mhfa,
            EmbeddingSource::External,
        ] {
            assert_eq!(src.as_str().parse::<EmbeddingSource>().unwrap(), src);
        }
        assert!("xvector".parse::<EmbeddingSource>().is_err());
    }

    #[test]
    fn embedding_rejects_non_finite_values() {
        let err = SpeakerEmbedding::new(EmbeddingSource::Fbank, vec![0.0, f64::NAN]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn cosine_is_one_for_parallel_and_zero_for_silent() {
        let a = SpeakerEmbedding::new(EmbeddingSource::External, vec![1.0, 2.0, 2.0]).unwrap();
        let b = SpeakerEmbedding::new(EmbeddingSource::External, vec![2.0, 4.0, 4.0]).unwrap();
        assert!((a.cosine(&b).unwrap() - 1.0).abs() < 1e-12);
        let z = SpeakerEmbedding::new(EmbeddingSource::External, vec![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(a.cosine(&z).unwrap(), 0.0);
        let short = SpeakerEmbedding::new(EmbeddingSource::External, vec![1.0]).unwrap();
        assert!(a.cosine(&short).is_err());
    }
}
