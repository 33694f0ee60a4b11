//! Personal voice-activity detection: per-frame classification into
//! non-speech, target speech, and non-target speech.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::common::{condition, Linear};
use super::lstm::Blstm;
use crate::autodiff::{Tape, TensorId};
use crate::corpus::N_VAD_CLASSES;
use crate::error::{Error, Result};
use crate::frontend::D_UP;
use crate::params::{HasParams, Param};
use crate::tensor::fmt_shape;

/// Hidden width per recurrent direction.
pub const PVAD_HIDDEN: usize = 32;
const N_RECURRENT: usize = 2;

/// Where the speaker embedding multiplies in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PvadConditionSite {
    /// After the input linear layer (the reference position).
    AfterFirstLinear,
    /// After recurrent layer 1, via a projection back to the embedding width.
    AfterBlstm1,
}

impl Default for PvadConditionSite {
    fn default() -> Self {
        PvadConditionSite::AfterFirstLinear
    }
}

/// Detection model.
pub struct PVadModel {
    pub layer_logits: Param, // combines the upstream layer stack
    linear_in: Linear,       // D_UP -> d_emb
    layers: Vec<Blstm>,
    cond_proj: Linear, // used by the AfterBlstm1 site
    linear_out: Linear,
    site: PvadConditionSite,
    d_emb: usize,
}

impl PVadModel {
    pub fn new(name: &str, d_emb: usize, site: PvadConditionSite, rng: &mut ChaCha8Rng) -> Self {
        let linear_in = Linear::new(&format!("{name}.linear_in"), D_UP, d_emb, rng);
        let mut layers = Vec::with_capacity(N_RECURRENT);
        for j in 1..=N_RECURRENT {
            let d_in = if j == 1 {
                d_emb
            } else if site == PvadConditionSite::AfterBlstm1 && j == 2 {
                d_emb
            } else {
                2 * PVAD_HIDDEN
            };
            layers.push(Blstm::new(&format!("{name}.blstm{j}"), d_in, PVAD_HIDDEN, rng));
        }
        let cond_proj = Linear::new(&format!("{name}.cond_proj"), 2 * PVAD_HIDDEN, d_emb, rng);
        let linear_out =
            Linear::new(&format!("{name}.linear_out"), 2 * PVAD_HIDDEN, N_VAD_CLASSES, rng);
        PVadModel {
            layer_logits: Param::zeros(format!("{name}.layer_logits"), &[crate::frontend::N_LAYERS]),
            linear_in,
            layers,
            cond_proj,
            linear_out,
            site,
            d_emb,
        }
    }

    pub fn d_emb(&self) -> usize {
        self.d_emb
    }

    /// Combine an upstream layer stack with this model's own layer weights.
    pub fn features_from_stack(
        &self,
        tape: &mut Tape,
        stack_flat: TensorId,
    ) -> Result<TensorId> {
        let logits = tape.param(&self.layer_logits)?;
        crate::frontend::weighted_layer_sum(tape, stack_flat, logits)
    }

    /// Forward pass: features `[T, D_UP]`, embedding `[d_emb]` → logits
    /// `[T, 3]` over {ns, tss, ntss}.
    pub fn forward(
        &self,
        tape: &mut Tape,
        features: TensorId,
        embedding: TensorId,
    ) -> Result<TensorId> {
        let shape = tape.value(features).shape().to_vec();
        if shape.len() != 2 || shape[1] != D_UP {
            return Err(Error::shape(
                "pvad_forward",
                format!("expected [T, {D_UP}] features, got {}", fmt_shape(&shape)),
            ));
        }
        if shape[0] == 0 {
            return Err(Error::contract("pvad_forward: empty feature sequence"));
        }
        let mut x = self.linear_in.apply(tape, features)?;
        if self.site == PvadConditionSite::AfterFirstLinear {
            x = condition(tape, x, embedding)?;
        }
        for (j, layer) in self.layers.iter().enumerate() {
            x = layer.apply(tape, x)?;
            if self.site == PvadConditionSite::AfterBlstm1 && j == 0 {
                let projected = self.cond_proj.apply(tape, x)?;
                x = condition(tape, projected, embedding)?;
            }
        }
        self.linear_out.apply(tape, x)
    }
}

impl HasParams for PVadModel {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.layer_logits);
        self.linear_in.visit_params(f);
        for l in &self.layers {
            l.visit_params(f);
        }
        self.cond_proj.visit_params(f);
        self.linear_out.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.layer_logits);
        self.linear_in.visit_params_mut(f);
        for l in &mut self.layers {
            l.visit_params_mut(f);
        }
        self.cond_proj.visit_params_mut(f);
        self.linear_out.visit_params_mut(f);
    }
}
