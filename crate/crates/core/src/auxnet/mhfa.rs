//! Multi-head factorised attention over the frozen upstream's layer stack.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingSource, SpeakerEmbedding};
use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::frontend::{weighted_layer_sum, LayerFeatureStack, D_UP, N_LAYERS};
use crate::params::{HasParams, Param};

fn default_heads() -> usize {
    4
}

fn default_d_c() -> usize {
    16
}

/// Attention geometry: number of heads and compressed key/value width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MhfaConfig {
    #[serde(default = "default_heads")]
    pub n_heads: usize,
    #[serde(default = "default_d_c")]
    pub d_c: usize,
}

impl Default for MhfaConfig {
    fn default() -> Self {
        MhfaConfig { n_heads: default_heads(), d_c: default_d_c() }
    }
}

impl MhfaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_c == 0 {
            return Err(Error::config(format!(
                "attention needs at least one head and a positive compression width, \
                 got {} heads x {}",
                self.n_heads, self.d_c
            )));
        }
        Ok(())
    }
}

/// Trainable attention pooling: keys and values are separately layer-weighted
/// sums of the upstream stack compressed to `d_c`; each head attends over
/// time with its own probe vector, and the concatenated head outputs project
/// to the embedding.  The layer weights here belong to this encoder alone.
#[derive(Debug, Clone)]
pub struct MhfaEncoder {
    key_logits: Param,   // [N_LAYERS]
    value_logits: Param, // [N_LAYERS]
    key_comp: Param,     // [D_UP, d_c]
    value_comp: Param,   // [D_UP, d_c]
    attn: Param,         // [n_heads, d_c]
    out_proj: Param,     // [n_heads * d_c, d_emb]
    cfg: MhfaConfig,
}

impl MhfaEncoder {
    pub fn new(name: &str, cfg: MhfaConfig, d_emb: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let comp_std = 1.0 / libm::sqrt(D_UP as f64);
        Ok(MhfaEncoder {
            key_logits: Param::zeros(format!("{name}.key_logits"), &[N_LAYERS]),
            value_logits: Param::zeros(format!("{name}.value_logits"), &[N_LAYERS]),
            key_comp: Param::randn(format!("{name}.key_comp"), &[D_UP, cfg.d_c], comp_std, rng),
            value_comp: Param::randn(format!("{name}.value_comp"), &[D_UP, cfg.d_c], comp_std, rng),
            attn: Param::randn(
                format!("{name}.attn"),
                &[cfg.n_heads, cfg.d_c],
                1.0 / libm::sqrt(cfg.d_c as f64),
                rng,
            ),
            out_proj: Param::randn(
                format!("{name}.out_proj"),
                &[cfg.n_heads * cfg.d_c, d_emb],
                1.0 / libm::sqrt((cfg.n_heads * cfg.d_c) as f64),
                rng,
            ),
            cfg,
        })
    }

    pub fn d_emb(&self) -> usize {
        self.out_proj.value().shape()[1]
    }

    pub fn config(&self) -> MhfaConfig {
        self.cfg
    }

    /// On-tape attention pooling of an upstream layer stack to `[d_emb]`.
    pub fn encode(&self, tape: &mut Tape, stack: &LayerFeatureStack) -> Result<TensorId> {
        if stack.layers.len() != N_LAYERS {
            return Err(Error::shape(
                "encode_mhfa",
                format!(
                    "layer stack holds {} layers but the attention parameters expect {}",
                    stack.layers.len(),
                    N_LAYERS
                ),
            ));
        }
        let t = stack.t_frames();
        let flat = tape.leaf(stack.flattened()?)?;

        let key_logits = tape.param(&self.key_logits)?;
        let key_base = weighted_layer_sum(tape, flat, key_logits)?; // [T, D_UP]
        let key_comp = tape.param(&self.key_comp)?;
        let keys = tape.matmul(key_base, key_comp)?; // [T, d_c]

        let value_logits = tape.param(&self.value_logits)?;
        let value_base = weighted_layer_sum(tape, flat, value_logits)?;
        let value_comp = tape.param(&self.value_comp)?;
        let values = tape.matmul(value_base, value_comp)?; // [T, d_c]

        let attn = tape.param(&self.attn)?;
        let mut heads = Vec::with_capacity(self.cfg.n_heads);
        for h in 0..self.cfg.n_heads {
            let probe = tape.slice(attn, 0, h, 1)?; // [1, d_c]
            let scores = tape.matmul_nt(keys, probe)?; // [T, 1]
            let scores_row = tape.reshape(scores, vec![1, t])?;
            let alpha = tape.softmax(scores_row)?; // [1, T]
            let head = tape.matmul(alpha, values)?; // [1, d_c]
            heads.push(head);
        }
        let cat = tape.concat(&heads, 1)?; // [1, n_heads * d_c]
        let out_proj = tape.param(&self.out_proj)?;
        let out = tape.matmul(cat, out_proj)?; // [1, d_emb]
        let d_emb = self.d_emb();
        tape.reshape(out, vec![d_emb])
    }

    /// Off-tape convenience returning a concrete embedding.
    pub fn encode_value(&self, stack: &LayerFeatureStack) -> Result<SpeakerEmbedding> {
        let mut tape = Tape::new();
        let out = self.encode(&mut tape, stack)?;
        SpeakerEmbedding::new(EmbeddingSource::Mhfa, tape.value(out).data().to_vec())
    }
}

impl HasParams for MhfaEncoder {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.key_logits);
        f(&self.value_logits);
        f(&self.key_comp);
        f(&self.value_comp);
        f(&self.attn);
        f(&self.out_proj);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.key_logits);
        f(&mut self.value_logits);
        f(&mut self.key_comp);
        f(&mut self.value_comp);
        f(&mut self.attn);
        f(&mut self.out_proj);
    }
}
