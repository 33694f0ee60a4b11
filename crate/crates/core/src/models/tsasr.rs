//! Speaker-conditioned recognition head: linear-in, Hadamard conditioning,
//! projection with sinusoidal positions, Conformer blocks, token logits.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::common::{condition, glu, sinusoidal_pe, swish, Linear};
use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::frontend::D_UP;
use crate::params::{HasParams, Param};
use crate::tensor::fmt_shape;

fn default_blocks() -> usize {
    2
}

fn default_d_model() -> usize {
    32
}

fn default_heads() -> usize {
    2
}

fn default_kernel() -> usize {
    7
}

fn default_d_ff() -> usize {
    64
}

/// Conformer geometry.  Defaults are the desk-scale values; the larger
/// reference configuration (8 blocks, 144 wide, 4 heads, kernel 15, ff 1024)
/// is expressible but slow on one core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConformerConfig {
    #[serde(default = "default_blocks")]
    pub n_blocks: usize,
    #[serde(default = "default_d_model")]
    pub d_model: usize,
    #[serde(default = "default_heads")]
    pub n_heads: usize,
    #[serde(default = "default_kernel")]
    pub conv_kernel: usize,
    #[serde(default = "default_d_ff")]
    pub d_ff: usize,
}

impl Default for ConformerConfig {
    fn default() -> Self {
        ConformerConfig {
            n_blocks: default_blocks(),
            d_model: default_d_model(),
            n_heads: default_heads(),
            conv_kernel: default_kernel(),
            d_ff: default_d_ff(),
        }
    }
}

impl ConformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return Err(Error::config("conformer dimensions must all be positive"));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        if self.conv_kernel % 2 == 0 {
            return Err(Error::config(format!(
                "conformer conv kernel must be odd, got {}",
                self.conv_kernel
            )));
        }
        Ok(())
    }
}

/// Where the speaker embedding multiplies into the recognition network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsrConditionSite {
    /// After the first linear layer (the reference position).
    #[default]
    AfterFirstLinear,
    /// After Conformer block `k` (0-based); requires `d_model == d_emb`.
    AfterBlock(usize),
}

struct FeedForward {
    lin1: Linear,
    lin2: Linear,
}

impl FeedForward {
    fn new(name: &str, d_model: usize, d_ff: usize, rng: &mut ChaCha8Rng) -> Self {
        FeedForward {
            lin1: Linear::new(&format!("{name}.lin1"), d_model, d_ff, rng),
            lin2: Linear::new(&format!("{name}.lin2"), d_ff, d_model, rng),
        }
    }

    fn apply(&self, tape: &mut Tape, x: TensorId) -> Result<TensorId> {
        let n = tape.layer_norm(x)?;
        let h = self.lin1.apply(tape, n)?;
        let h = swish(tape, h)?;
        self.lin2.apply(tape, h)
    }
}

impl HasParams for FeedForward {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.lin1.visit_params(f);
        self.lin2.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.lin1.visit_params_mut(f);
        self.lin2.visit_params_mut(f);
    }
}

struct SelfAttention {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    n_heads: usize,
}

impl SelfAttention {
    fn new(name: &str, d_model: usize, n_heads: usize, rng: &mut ChaCha8Rng) -> Self {
        SelfAttention {
            wq: Linear::new(&format!("{name}.wq"), d_model, d_model, rng),
            wk: Linear::new(&format!("{name}.wk"), d_model, d_model, rng),
            wv: Linear::new(&format!("{name}.wv"), d_model, d_model, rng),
            wo: Linear::new(&format!("{name}.wo"), d_model, d_model, rng),
            n_heads,
        }
    }

    fn apply(&self, tape: &mut Tape, x: TensorId) -> Result<TensorId> {
        let d_model = tape.value(x).shape()[1];
        let d_head = d_model / self.n_heads;
        let n = tape.layer_norm(x)?;
        let q = self.wq.apply(tape, n)?;
        let k = self.wk.apply(tape, n)?;
        let v = self.wv.apply(tape, n)?;
        let scale = 1.0 / libm::sqrt(d_head as f64);
        let mut heads = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = tape.slice(q, 1, h * d_head, d_head)?;
            let kh = tape.slice(k, 1, h * d_head, d_head)?;
            let vh = tape.slice(v, 1, h * d_head, d_head)?;
            let scores = tape.matmul_nt(qh, kh)?; // [T, T]
            let scaled = tape.scale(scores, scale)?;
            let alpha = tape.softmax(scaled)?;
            heads.push(tape.matmul(alpha, vh)?);
        }
        let cat = tape.concat(&heads, 1)?;
        self.wo.apply(tape, cat)
    }
}

impl HasParams for SelfAttention {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.wq.visit_params(f);
        self.wk.visit_params(f);
        self.wv.visit_params(f);
        self.wo.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.wq.visit_params_mut(f);
        self.wk.visit_params_mut(f);
        self.wv.visit_params_mut(f);
        self.wo.visit_params_mut(f);
    }
}

struct ConvModule {
    pointwise_in: Linear,  // d -> 2d, gated down to d
    depthwise: Param,      // [d, kernel]
    pointwise_out: Linear, // d -> d
}

impl ConvModule {
    fn new(name: &str, d_model: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        ConvModule {
            pointwise_in: Linear::new(&format!("{name}.pw_in"), d_model, 2 * d_model, rng),
            depthwise: Param::randn(
                format!("{name}.depthwise"),
                &[d_model, kernel],
                1.0 / libm::sqrt(kernel as f64),
                rng,
            ),
            pointwise_out: Linear::new(&format!("{name}.pw_out"), d_model, d_model, rng),
        }
    }

    fn apply(&self, tape: &mut Tape, x: TensorId) -> Result<TensorId> {
        let t_frames = tape.value(x).shape()[0];
        let kernel = self.depthwise.value().shape()[1];
        let pad = kernel / 2;
        let n = tape.layer_norm(x)?;
        let wide = self.pointwise_in.apply(tape, n)?;
        let gated = glu(tape, wide)?;
        // Replicate-pad the time axis so a constant sequence stays constant
        // through the depthwise filter (zero padding would disturb the edges).
        let padded = if pad > 0 && t_frames > 0 {
            let first = tape.slice(gated, 0, 0, 1)?;
            let last = tape.slice(gated, 0, t_frames - 1, 1)?;
            let mut parts = vec![first; pad];
            parts.push(gated);
            parts.extend(std::iter::repeat_n(last, pad));
            tape.concat(&parts, 0)?
        } else {
            gated
        };
        let dw = tape.param(&self.depthwise)?;
        let conv = tape.conv1d_depthwise(padded, dw)?;
        let trimmed = tape.slice(conv, 0, pad, t_frames)?;
        let act = swish(tape, trimmed)?;
        self.pointwise_out.apply(tape, act)
    }
}

impl HasParams for ConvModule {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.pointwise_in.visit_params(f);
        f(&self.depthwise);
        self.pointwise_out.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.pointwise_in.visit_params_mut(f);
        f(&mut self.depthwise);
        self.pointwise_out.visit_params_mut(f);
    }
}

struct ConformerBlock {
    ff1: FeedForward,
    attn: SelfAttention,
    conv: ConvModule,
    ff2: FeedForward,
}

impl ConformerBlock {
    fn new(name: &str, cfg: &ConformerConfig, rng: &mut ChaCha8Rng) -> Self {
        ConformerBlock {
            ff1: FeedForward::new(&format!("{name}.ff1"), cfg.d_model, cfg.d_ff, rng),
            attn: SelfAttention::new(&format!("{name}.attn"), cfg.d_model, cfg.n_heads, rng),
            conv: ConvModule::new(&format!("{name}.conv"), cfg.d_model, cfg.conv_kernel, rng),
            ff2: FeedForward::new(&format!("{name}.ff2"), cfg.d_model, cfg.d_ff, rng),
        }
    }

    fn apply(&self, tape: &mut Tape, x: TensorId) -> Result<TensorId> {
        let ff1 = self.ff1.apply(tape, x)?;
        let half1 = tape.scale(ff1, 0.5)?;
        let x = tape.add(x, half1)?;

        let attn = self.attn.apply(tape, x)?;
        let x = tape.add(x, attn)?;

        let conv = self.conv.apply(tape, x)?;
        let x = tape.add(x, conv)?;

        let ff2 = self.ff2.apply(tape, x)?;
        let half2 = tape.scale(ff2, 0.5)?;
        let x = tape.add(x, half2)?;

        tape.layer_norm(x)
    }
}

impl HasParams for ConformerBlock {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.ff1.visit_params(f);
        self.attn.visit_params(f);
        self.conv.visit_params(f);
        self.ff2.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.ff1.visit_params_mut(f);
        self.attn.visit_params_mut(f);
        self.conv.visit_params_mut(f);
        self.ff2.visit_params_mut(f);
    }
}

/// Recognition model: logits over `vocab` tokens plus a final blank column.
pub struct TsAsrModel {
    pub layer_logits: Param, // combines the upstream layer stack
    linear_in: Linear,       // D_UP -> d_emb
    linear_proj: Linear,     // d_emb -> d_model
    blocks: Vec<ConformerBlock>,
    linear_out: Linear, // d_model -> vocab + 1
    site: AsrConditionSite,
    cfg: ConformerConfig,
}

impl TsAsrModel {
    pub fn new(
        name: &str,
        cfg: &ConformerConfig,
        d_emb: usize,
        vocab: usize,
        site: AsrConditionSite,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        if vocab == 0 {
            return Err(Error::config("recognition vocabulary must not be empty"));
        }
        if let AsrConditionSite::AfterBlock(k) = site {
            if k >= cfg.n_blocks {
                return Err(Error::config(format!(
                    "conditioning after block {k} but the model has {} blocks",
                    cfg.n_blocks
                )));
            }
            if cfg.d_model != d_emb {
                return Err(Error::config(format!(
                    "conditioning inside the blocks needs d_model = d_emb, got {} vs {d_emb}",
                    cfg.d_model
                )));
            }
        }
        let layer_logits = Param::zeros(format!("{name}.layer_logits"), &[crate::frontend::N_LAYERS]);
        let linear_in = Linear::new(&format!("{name}.linear_in"), D_UP, d_emb, rng);
        let linear_proj = Linear::new(&format!("{name}.linear_proj"), d_emb, cfg.d_model, rng);
        let blocks = (0..cfg.n_blocks)
            .map(|i| ConformerBlock::new(&format!("{name}.block{i}"), cfg, rng))
            .collect();
        let linear_out = Linear::new(&format!("{name}.linear_out"), cfg.d_model, vocab + 1, rng);
        Ok(TsAsrModel { layer_logits, linear_in, linear_proj, blocks, linear_out, site, cfg: *cfg })
    }

    pub fn vocab(&self) -> usize {
        self.linear_out.d_out() - 1
    }

    /// Width of the speaker embedding this model conditions on.
    pub fn d_emb(&self) -> usize {
        self.linear_in.d_out()
    }

    /// Index of the blank column in the output logits (always last).
    pub fn blank(&self) -> usize {
        self.vocab()
    }

    pub fn config(&self) -> &ConformerConfig {
        &self.cfg
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
    /// `[T, vocab + 1]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        features: TensorId,
        embedding: TensorId,
    ) -> Result<TensorId> {
        let shape = tape.value(features).shape().to_vec();
        if shape.len() != 2 || shape[1] != D_UP {
            return Err(Error::shape(
                "tsasr_forward",
                format!("expected [T, {D_UP}] features, got {}", fmt_shape(&shape)),
            ));
        }
        if shape[0] == 0 {
            return Err(Error::contract("tsasr_forward: empty feature sequence"));
        }
        let t_frames = shape[0];

        let mut x = self.linear_in.apply(tape, features)?;
        // Positions are injected before conditioning so that an all-zero
        // embedding annihilates them along with the features, keeping the
        // zero-conditioned network exactly frame-constant.
        let d_emb = self.linear_in.d_out();
        let pe = tape.leaf(sinusoidal_pe(t_frames, d_emb))?;
        x = tape.add(x, pe)?;
        if self.site == AsrConditionSite::AfterFirstLinear {
            x = condition(tape, x, embedding)?;
        }
        x = self.linear_proj.apply(tape, x)?;
        for (i, block) in self.blocks.iter().enumerate() {
            x = block.apply(tape, x)?;
            if self.site == AsrConditionSite::AfterBlock(i) {
                x = condition(tape, x, embedding)?;
            }
        }
        self.linear_out.apply(tape, x)
    }
}

impl HasParams for TsAsrModel {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.layer_logits);
        self.linear_in.visit_params(f);
        self.linear_proj.visit_params(f);
        for b in &self.blocks {
            b.visit_params(f);
        }
        self.linear_out.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.layer_logits);
        self.linear_in.visit_params_mut(f);
        self.linear_proj.visit_params_mut(f);
        for b in &mut self.blocks {
            b.visit_params_mut(f);
        }
        self.linear_out.visit_params_mut(f);
    }
}
