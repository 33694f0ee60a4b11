//! Frozen toy upstream encoder and the trainable layer-weighted sum.
//!
//! The upstream maps log mel-filterbank frames through a fixed stack of
//! `linear -> tanh -> depthwise conv` blocks whose weights are drawn once
//! from a hard-wired seed and never trained.  Every block's output is kept,
//! yielding a stack of layer features that downstream heads combine with a
//! learned softmax-weighted sum — the only trainable part of this module.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use super::fbank::{fbank, N_MEL};
use crate::autodiff::{kernels, Tape, TensorId};
use crate::error::{Error, Result};
use crate::params::gauss;
use crate::tensor::{fmt_shape, Tensor};

/// Width of every upstream layer.
pub const D_UP: usize = 32;
/// Number of upstream blocks, i.e. layers in the feature stack.
pub const N_LAYERS: usize = 4;
/// Depthwise convolution kernel width (same-padded).
const KERNEL: usize = 3;
/// Seed fixing the frozen upstream weights for every run and platform.
const UPSTREAM_SEED: u64 = 0xC0_FF_EE;

struct Block {
    w: Tensor, // [in, D_UP]
    b: Tensor, // [D_UP]
    k: Tensor, // [D_UP, KERNEL]
}

/// The frozen upstream encoder.  Construction is deterministic; the weights
/// live outside any tape, so no gradient can reach them.
pub struct ToyUpstream {
    blocks: Vec<Block>,
}

/// Per-layer features of one utterance, each `[T, D_UP]`, ordered from the
/// first block to the last.
#[derive(Debug, Clone)]
pub struct LayerFeatureStack {
    pub layers: Vec<Tensor>,
}

impl LayerFeatureStack {
    pub fn t_frames(&self) -> usize {
        self.layers[0].shape()[0]
    }

    /// Rows are flattened layers: `[N_LAYERS, T * D_UP]`.  This is the form
    /// the weighted sum consumes.
    pub fn flattened(&self) -> Result<Tensor> {
        let t = self.t_frames();
        let mut data = Vec::with_capacity(N_LAYERS * t * D_UP);
        for layer in &self.layers {
            if layer.shape() != [t, D_UP] {
                return Err(Error::shape(
                    "layer_stack",
                    format!(
                        "layer shaped {} in a stack of [{t}, {D_UP}]",
                        fmt_shape(layer.shape())
                    ),
                ));
            }
            data.extend_from_slice(layer.data());
        }
        Tensor::new(vec![N_LAYERS, t * D_UP], data)
    }
}

impl Default for ToyUpstream {
    fn default() -> Self {
        Self::new()
    }
}

impl ToyUpstream {
    pub fn new() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(UPSTREAM_SEED);
        let mut blocks = Vec::with_capacity(N_LAYERS);
        let mut d_in = N_MEL;
        for _ in 0..N_LAYERS {
            let scale = 1.0 / libm::sqrt(d_in as f64);
            let w = draw(&mut rng, &[d_in, D_UP], scale);
            let b = draw(&mut rng, &[D_UP], 0.1);
            let k = draw(&mut rng, &[D_UP, KERNEL], 1.0 / libm::sqrt(KERNEL as f64));
            blocks.push(Block { w, b, k });
            d_in = D_UP;
        }
        ToyUpstream { blocks }
    }

    /// Run the frozen stack over filterbank features `[T, N_MEL]`.
    pub fn features(&self, fbank: &Tensor) -> Result<LayerFeatureStack> {
        if fbank.rank() != 2 || fbank.shape()[1] != N_MEL {
            return Err(Error::shape(
                "toy_upstream",
                format!("expected [T, {N_MEL}] features, got {}", fmt_shape(fbank.shape())),
            ));
        }
        let t = fbank.shape()[0];
        let mut x = fbank.clone();
        let mut layers = Vec::with_capacity(N_LAYERS);
        for block in &self.blocks {
            let d_in = x.shape()[1];
            let mut h = vec![0.0; t * D_UP];
            kernels::mm_acc(x.data(), block.w.data(), t, d_in, D_UP, &mut h);
            for row in h.chunks_mut(D_UP) {
                for (v, b) in row.iter_mut().zip(block.b.data()) {
                    *v = libm::tanh(*v + b);
                }
            }
            let mut y = vec![0.0; t * D_UP];
            kernels::conv1d_depthwise_fwd(&h, block.k.data(), t, D_UP, KERNEL, &mut y);
            let layer = Tensor::new(vec![t, D_UP], y)?;
            x = layer.clone();
            layers.push(layer);
        }
        Ok(LayerFeatureStack { layers })
    }

    /// Filterbank extraction followed by the frozen stack.
    pub fn features_for_wave(&self, wave: &[f64]) -> Result<LayerFeatureStack> {
        self.features(&fbank(wave)?)
    }
}

fn draw(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| std * gauss(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

/// Differentiable convex combination of stacked layer features.
///
/// `stack_flat` is `[N_LAYERS, T * D_UP]` (one row per flattened layer,
/// typically a constant leaf) and `logits` is `[N_LAYERS]` (typically a
/// trainable parameter).  The result `[T, D_UP]` is the per-element sum of
/// layers weighted by `softmax(logits)`, so it always stays inside the
/// convex hull of the layer features.
pub fn weighted_layer_sum(
    tape: &mut Tape,
    stack_flat: TensorId,
    logits: TensorId,
) -> Result<TensorId> {
    let stack_shape = tape.value(stack_flat).shape().to_vec();
    let n_logits = tape.value(logits).numel();
    if stack_shape.len() != 2 || stack_shape[0] != n_logits {
        return Err(Error::shape(
            "weighted_layer_sum",
            format!(
                "stack {} incompatible with {n_logits} layer logits",
                fmt_shape(&stack_shape)
            ),
        ));
    }
    if stack_shape[1] % D_UP != 0 {
        return Err(Error::shape(
            "weighted_layer_sum",
            format!("stack row length {} is not a multiple of {D_UP}", stack_shape[1]),
        ));
    }
    let t = stack_shape[1] / D_UP;
    let weights = tape.softmax(logits)?;
    let flat = tape.matmul(weights, stack_flat)?;
    tape.reshape(flat, vec![t, D_UP])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check::{grad_check, FD_EPS};
    use crate::corpus::{render_utterance, sample_script, sample_speaker};

    fn example_stack() -> LayerFeatureStack {
        let profile = sample_speaker(77, 0);
        let script = sample_script(77, 0, 0);
        let utt = render_utterance(&profile, &script, 0).unwrap();
        ToyUpstream::new().features_for_wave(&utt.waveform).unwrap()
    }

    #[test]
    fn construction_and_features_are_deterministic() {
        let profile = sample_speaker(77, 0);
        let script = sample_script(77, 0, 0);
        let utt = render_utterance(&profile, &script, 0).unwrap();
        let a = ToyUpstream::new().features_for_wave(&utt.waveform).unwrap();
        let b = ToyUpstream::new().features_for_wave(&utt.waveform).unwrap();
        assert_eq!(a.layers.len(), N_LAYERS);
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(la.data(), lb.data());
        }
    }

    #[test]
    fn layer_shapes_follow_the_frame_count() {
        let stack = example_stack();
        let t = stack.t_frames();
        assert!(t > 10);
        for layer in &stack.layers {
            assert_eq!(layer.shape(), &[t, D_UP]);
        }
        assert_eq!(stack.flattened().unwrap().shape(), &[N_LAYERS, t * D_UP]);
    }

    #[test]
    fn different_speakers_produce_different_deep_features() {
        let script = sample_script(77, 0, 0);
        let up = ToyUpstream::new();
        let a = sample_speaker(77, 0);
        let b = sample_speaker(77, 1);
        let fa = up
            .features_for_wave(&render_utterance(&a, &script, 0).unwrap().waveform)
            .unwrap();
        let fb = up
            .features_for_wave(&render_utterance(&b, &script, 0).unwrap().waveform)
            .unwrap();
        let t = fa.t_frames().min(fb.t_frames());
        let mut dist = 0.0;
        for tt in 0..t {
            for d in 0..D_UP {
                let diff = fa.layers[N_LAYERS - 1].at2(tt, d) - fb.layers[N_LAYERS - 1].at2(tt, d);
                dist += diff * diff;
            }
        }
        assert!(dist.sqrt() > 1e-3, "deep features failed to separate speakers");
    }

    #[test]
    fn one_hot_logits_select_a_single_layer() {
        let stack = example_stack();
        let flat = stack.flattened().unwrap();
        for pick in 0..N_LAYERS {
            let mut tape = Tape::new();
            let stack_id = tape.leaf(flat.clone()).unwrap();
            let logit_values: Vec<f64> =
                (0..N_LAYERS).map(|l| if l == pick { 20.0 } else { -20.0 }).collect();
            let logits = tape.leaf(Tensor::vector(logit_values)).unwrap();
            let out = weighted_layer_sum(&mut tape, stack_id, logits).unwrap();
            let got = tape.value(out);
            let want = &stack.layers[pick];
            let worst = got
                .data()
                .iter()
                .zip(want.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(worst < 1e-6, "layer {pick}: off by {worst:.2e}");
        }
    }

    #[test]
    fn equal_logits_average_the_layers() {
        let stack = example_stack();
        let flat = stack.flattened().unwrap();
        let mut tape = Tape::new();
        let stack_id = tape.leaf(flat).unwrap();
        let logits = tape.leaf(Tensor::vector(vec![0.7; N_LAYERS])).unwrap();
        let out = weighted_layer_sum(&mut tape, stack_id, logits).unwrap();
        let got = tape.value(out).clone();
        let t = stack.t_frames();
        for tt in 0..t {
            for d in 0..D_UP {
                let mean: f64 =
                    stack.layers.iter().map(|l| l.at2(tt, d)).sum::<f64>() / N_LAYERS as f64;
                assert!((got.at2(tt, d) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_stays_in_the_convex_hull_of_the_layers() {
        let stack = example_stack();
        let flat = stack.flattened().unwrap();
        let mut tape = Tape::new();
        let stack_id = tape.leaf(flat).unwrap();
        let logits = tape.leaf(Tensor::vector(vec![0.3, -1.2, 2.0, 0.1])).unwrap();
        let out = weighted_layer_sum(&mut tape, stack_id, logits).unwrap();
        let got = tape.value(out).clone();
        for tt in 0..stack.t_frames() {
            for d in 0..D_UP {
                let lo = stack.layers.iter().map(|l| l.at2(tt, d)).fold(f64::INFINITY, f64::min);
                let hi =
                    stack.layers.iter().map(|l| l.at2(tt, d)).fold(f64::NEG_INFINITY, f64::max);
                let v = got.at2(tt, d);
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn logit_gradients_match_finite_differences() {
        let stack = example_stack();
        let flat = stack.flattened().unwrap();
        let x0 = Tensor::vector(vec![0.4, -0.3, 0.9, 0.1]);
        let worst = grad_check(
            |tape, logits| {
                let stack_id = tape.leaf(flat.clone())?;
                let out = weighted_layer_sum(tape, stack_id, logits)?;
                tape.sum_all(out)
            },
            &x0,
            FD_EPS,
        )
        .unwrap();
        assert!(worst < 1e-4, "worst relative gradient error {worst:.3e}");
    }

    #[test]
    fn no_gradient_reaches_the_frozen_stack() {
        let stack = example_stack();
        let flat = stack.flattened().unwrap();
        let mut tape = Tape::new();
        let stack_id = tape.leaf(flat).unwrap();
        let logits = tape.leaf_grad(Tensor::vector(vec![0.0; N_LAYERS])).unwrap();
        let out = weighted_layer_sum(&mut tape, stack_id, logits).unwrap();
        let loss = tape.sum_all(out).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(logits).is_some());
        assert!(grads.get(stack_id).is_none(), "constant stack leaf accumulated a gradient");
    }

    #[test]
    fn rejects_mismatched_stack_and_logits() {
        let stack = example_stack();
        let flat = stack.flattened().unwrap();
        let mut tape = Tape::new();
        let stack_id = tape.leaf(flat).unwrap();
        let logits = tape.leaf(Tensor::vector(vec![0.0; N_LAYERS + 1])).unwrap();
        assert!(weighted_layer_sum(&mut tape, stack_id, logits).is_err());
    }
}
