//! Filterbank auxiliary encoder: per-frame linear/ReLU stack with temporal
//! average pooling.

use rand_chacha::ChaCha8Rng;

use super::{EmbeddingSource, SpeakerEmbedding};
use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::frontend::N_MEL;
use crate::models::Linear;
use crate::params::{HasParams, Param};
use crate::tensor::{fmt_shape, Tensor};

/// Encodes enrollment filterbank frames `[T, N_MEL]` into one embedding by
/// mean-pooling per-frame projections.  `depth` is 1 or 2 linear+ReLU layers.
#[derive(Debug, Clone)]
pub struct FbankAuxEncoder {
    layers: Vec<Linear>,
}

impl FbankAuxEncoder {
    pub fn new(name: &str, depth: usize, d_emb: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if !(1..=2).contains(&depth) {
            return Err(Error::config(format!(
                "filterbank encoder depth must be 1 or 2, got {depth}"
            )));
        }
        let mut layers = Vec::with_capacity(depth);
        let mut d_in = N_MEL;
        for l in 0..depth {
            layers.push(Linear::new(&format!("{name}.l{l}"), d_in, d_emb, rng));
            d_in = d_emb;
        }
        Ok(FbankAuxEncoder { layers })
    }

    pub fn d_emb(&self) -> usize {
        self.layers.last().expect("at least one layer").d_out()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// On-tape encoding of filterbank features `[T, N_MEL]` to `[d_emb]`.
    pub fn encode(&self, tape: &mut Tape, feats: TensorId) -> Result<TensorId> {
        let shape = tape.value(feats).shape().to_vec();
        if shape.len() != 2 || shape[1] != N_MEL {
            return Err(Error::shape(
                "encode_fbank_aux",
                format!("expected [T, {N_MEL}] features, got {}", fmt_shape(&shape)),
            ));
        }
        if shape[0] == 0 {
            return Err(Error::contract(
                "encode_fbank_aux: enrollment sequence is empty (T must be >= 1)",
            ));
        }
        let mut h = feats;
        for layer in &self.layers {
            h = layer.apply(tape, h)?;
            h = tape.relu(h)?;
        }
        tape.mean_rows(h)
    }

    /// Off-tape convenience: encode concrete features into an embedding.
    pub fn encode_value(&self, feats: &Tensor) -> Result<SpeakerEmbedding> {
        let mut tape = Tape::new();
        let id = tape.leaf(feats.clone())?;
        let out = self.encode(&mut tape, id)?;
        SpeakerEmbedding::new(EmbeddingSource::Fbank, tape.value(out).data().to_vec())
    }
}

impl HasParams for FbankAuxEncoder {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        for layer in &self.layers {
            layer.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for layer in &mut self.layers {
            layer.visit_params_mut(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand_chacha::rand_core::SeedableRng;

    use crate::auxnet::D_EMB;

    fn encoder(depth: usize) -> FbankAuxEncoder {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        FbankAuxEncoder::new("fbank_aux", depth, D_EMB, &mut rng).unwrap()
    }

    fn random_feats(t: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..t * N_MEL).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect();
        Tensor::new(vec![t, N_MEL], data).unwrap()
    }

    #[test]
    fn pooling_is_identity_on_constant_input() {
        for depth in [1, 2] {
            let enc = encoder(depth);
            let row = random_feats(1, 7);
            let mut repeated = Vec::new();
            for _ in 0..6 {
                repeated.extend_from_slice(row.data());
            }
            let rep = Tensor::new(vec![6, N_MEL], repeated).unwrap();
            let single = enc.encode_value(&row).unwrap();
            let pooled = enc.encode_value(&rep).unwrap();
            for (a, b) in single.vector.iter().zip(&pooled.vector) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn frame_permutation_leaves_the_embedding_unchanged() {
        let enc = encoder(2);
        let feats = random_feats(12, 8);
        let mut order: Vec<usize> = (0..12).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        let mut permuted = Vec::new();
        for &t in &order {
            permuted.extend_from_slice(feats.row(t));
        }
        let shuffled = Tensor::new(vec![12, N_MEL], permuted).unwrap();
        let a = enc.encode_value(&feats).unwrap();
        let b = enc.encode_value(&shuffled).unwrap();
        for (x, y) in a.vector.iter().zip(&b.vector) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_with_zero_bias_gives_zero_embedding() {
        // Fresh encoders have zero-initialised biases.
        for depth in [1, 2] {
            let enc = encoder(depth);
            let emb = enc.encode_value(&Tensor::zeros(&[4, N_MEL])).unwrap();
            assert!(emb.vector.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let enc = encoder(1);
        let err = enc.encode_value(&Tensor::zeros(&[0, N_MEL])).unwrap_err();
        assert!(err.to_string().contains("empty"));
    }

    #[test]
    fn depth_outside_one_or_two_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        assert!(FbankAuxEncoder::new("e", 0, D_EMB, &mut rng).is_err());
        assert!(FbankAuxEncoder::new("e", 3, D_EMB, &mut rng).is_err());
    }

    #[test]
    fn every_parameter_receives_gradient() {
        let enc = encoder(2);
        let feats = random_feats(5, 10);
        let mut tape = Tape::new();
        let id = tape.leaf(feats).unwrap();
        let emb = enc.encode(&mut tape, id).unwrap();
        let loss = tape.sum_all(emb).unwrap();
        let grads = tape.backward(loss).unwrap();
        for name in enc.param_names() {
            let g = grads.by_name(&name).unwrap_or_else(|| panic!("no gradient for {name}"));
            assert!(g.data().iter().any(|&v| v != 0.0) || name.ends_with(".b"));
        }
    }
}
