//! Target-speech extraction: learned conv encoder over the mixture waveform,
//! recurrent mask estimation conditioned on the speaker embedding, and a
//! transposed-conv decoder back to the waveform.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::common::{condition, Linear};
use super::lstm::Blstm;
use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::frontend::D_UP;
use crate::params::{HasParams, Param};
use crate::tensor::{fmt_shape, Tensor};

/// Encoder channels.
pub const TSE_CHANNELS: usize = 64;
/// Encoder kernel length in samples (20 ms at 8 kHz).
pub const TSE_KERNEL: usize = 160;
/// Encoder stride in samples, matching the 10 ms feature hop.
pub const TSE_STRIDE: usize = 80;
/// Hidden width per recurrent direction.
pub const TSE_HIDDEN: usize = 64;
const N_RECURRENT: usize = 3;

/// After which recurrent layer the speaker embedding multiplies in (1-based;
/// the reference position is after the first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TseConditionSite {
    AfterBlstm1,
    AfterBlstm2,
    AfterBlstm3,
}

impl Default for TseConditionSite {
    fn default() -> Self {
        TseConditionSite::AfterBlstm1
    }
}

impl TseConditionSite {
    fn index(self) -> usize {
        match self {
            TseConditionSite::AfterBlstm1 => 1,
            TseConditionSite::AfterBlstm2 => 2,
            TseConditionSite::AfterBlstm3 => 3,
        }
    }
}

/// All tape nodes a forward pass produces; tests and losses pick the parts
/// they need.
#[derive(Debug, Clone, Copy)]
pub struct TseForward {
    /// Encoded mixture `[T, TSE_CHANNELS]`.
    pub encoded: TensorId,
    /// Sigmoid mask `[T, TSE_CHANNELS]`, elementwise in [0, 1].
    pub mask: TensorId,
    /// Estimated target waveform `[len]`, same length as the input mixture.
    pub estimate: TensorId,
}

/// Extraction model.
pub struct TseModel {
    pub layer_logits: Param, // combines the upstream layer stack
    conv: Param,             // [C, 1, K]
    deconv: Param,           // [C, 1, K]
    layers: Vec<Blstm>,
    cond_proj: Linear, // 2H -> d_emb at the conditioning site
    mask_head: Linear,
    site: TseConditionSite,
    d_emb: usize,
}

impl TseModel {
    pub fn new(name: &str, d_emb: usize, site: TseConditionSite, rng: &mut ChaCha8Rng) -> Self {
        let conv_std = 1.0 / libm::sqrt(TSE_KERNEL as f64);
        let conv = Param::randn(format!("{name}.conv"), &[TSE_CHANNELS, 1, TSE_KERNEL], conv_std, rng);
        let deconv = Param::randn(
            format!("{name}.deconv"),
            &[TSE_CHANNELS, 1, TSE_KERNEL],
            conv_std,
            rng,
        );
        let site_idx = site.index();
        let mut layers = Vec::with_capacity(N_RECURRENT);
        for j in 1..=N_RECURRENT {
            let d_in = if j == 1 {
                D_UP + TSE_CHANNELS
            } else if j == site_idx + 1 {
                d_emb
            } else {
                2 * TSE_HIDDEN
            };
            layers.push(Blstm::new(&format!("{name}.blstm{j}"), d_in, TSE_HIDDEN, rng));
        }
        let cond_proj = Linear::new(&format!("{name}.cond_proj"), 2 * TSE_HIDDEN, d_emb, rng);
        let mask_in = if site_idx == N_RECURRENT { d_emb } else { 2 * TSE_HIDDEN };
        let mask_head = Linear::new(&format!("{name}.mask_head"), mask_in, TSE_CHANNELS, rng);
        TseModel { layer_logits: Param::zeros(format!("{name}.layer_logits"), &[crate::frontend::N_LAYERS]), conv, deconv, layers, cond_proj, mask_head, site, d_emb }
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

    /// Strided learned filterbank over the raw mixture: `[len]` →
    /// `[T, TSE_CHANNELS]`.
    pub fn encode(&self, tape: &mut Tape, mixture: TensorId) -> Result<TensorId> {
        let len = {
            let v = tape.value(mixture);
            if v.rank() != 1 {
                return Err(Error::shape(
                    "tse_encode",
                    format!("mixture must be 1-D, got {}", fmt_shape(v.shape())),
                ));
            }
            v.numel()
        };
        if len < TSE_KERNEL {
            return Err(Error::shape(
                "tse_encode",
                format!("mixture has {len} samples but the encoder kernel needs {TSE_KERNEL}"),
            ));
        }
        let x = tape.reshape(mixture, vec![len, 1])?;
        let k = tape.param(&self.conv)?;
        tape.conv1d(x, k, TSE_STRIDE, false)
    }

    /// Transposed-conv resynthesis of masked channels, padded/trimmed to
    /// `target_len` samples.
    pub fn decode(&self, tape: &mut Tape, masked: TensorId, target_len: usize) -> Result<TensorId> {
        let k = tape.param(&self.deconv)?;
        let raw = tape.conv1d_transposed(masked, k, TSE_STRIDE)?; // [L, 1]
        let l_out = tape.value(raw).shape()[0];
        let flat = tape.reshape(raw, vec![l_out])?;
        if l_out == target_len {
            Ok(flat)
        } else if l_out > target_len {
            tape.slice(flat, 0, 0, target_len)
        } else {
            let tail = tape.leaf(Tensor::zeros(&[target_len - l_out]))?;
            tape.concat(&[flat, tail], 0)
        }
    }

    /// Full forward pass.  `mixture` is the raw waveform `[len]`, `features`
    /// the `[T_f, D_UP]` weighted-sum features of the same mixture, and
    /// `embedding` the `[d_emb]` speaker vector.
    pub fn forward(
        &self,
        tape: &mut Tape,
        mixture: TensorId,
        features: TensorId,
        embedding: TensorId,
    ) -> Result<TseForward> {
        let len = tape.value(mixture).numel();
        let encoded = self.encode(tape, mixture)?;
        let t_conv = tape.value(encoded).shape()[0];

        let f_shape = tape.value(features).shape().to_vec();
        if f_shape.len() != 2 || f_shape[1] != D_UP {
            return Err(Error::shape(
                "tse_forward",
                format!("expected [T, {D_UP}] features, got {}", fmt_shape(&f_shape)),
            ));
        }
        let t_feat = f_shape[0];
        // The 25 ms analysis window loses one frame relative to the 20 ms
        // encoder kernel on most lengths; repeat the final feature frame to
        // re-align.  Anything beyond one frame is a framing-contract breach.
        let features = if t_feat == t_conv {
            features
        } else if t_feat + 1 == t_conv {
            let last = tape.slice(features, 0, t_feat - 1, 1)?;
            tape.concat(&[features, last], 0)?
        } else {
            return Err(Error::shape(
                "tse_forward",
                format!(
                    "features span {t_feat} frames but the encoded mixture spans {t_conv}; \
                     they must agree within one frame"
                ),
            ));
        };

        let mut x = tape.concat(&[features, encoded], 1)?;
        for (j, layer) in self.layers.iter().enumerate() {
            x = layer.apply(tape, x)?;
            if j + 1 == self.site.index() {
                let projected = self.cond_proj.apply(tape, x)?;
                x = condition(tape, projected, embedding)?;
            }
        }
        let mask_logits = self.mask_head.apply(tape, x)?;
        let mask = tape.sigmoid(mask_logits)?;
        let masked = tape.mul(mask, encoded)?;
        let estimate = self.decode(tape, masked, len)?;
        Ok(TseForward { encoded, mask, estimate })
    }
}

impl HasParams for TseModel {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.layer_logits);
        f(&self.conv);
        f(&self.deconv);
        for l in &self.layers {
            l.visit_params(f);
        }
        self.cond_proj.visit_params(f);
        self.mask_head.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.layer_logits);
        f(&mut self.conv);
        f(&mut self.deconv);
        for l in &mut self.layers {
            l.visit_params_mut(f);
        }
        self.cond_proj.visit_params_mut(f);
        self.mask_head.visit_params_mut(f);
    }
}
