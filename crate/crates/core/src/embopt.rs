//! Test-time refinement of a speaker embedding against a frozen recognition
//! model: starting from an enrollment embedding, iteratively step the
//! embedding — and nothing else — so that the summed pre-softmax score of a
//! frame-level label sequence goes up.
//!
//! The score is read before the softmax on purpose: a posterior can be
//! inflated by suppressing the other classes rather than by actually
//! supporting the labelled one, and the raw logit is immune to that.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::auxnet::EmbeddingSource;
use crate::error::{Error, Result};
use crate::frontend::LayerFeatureStack;
use crate::models::TsAsrModel;
use crate::objectives::{frame_cross_entropy_loss, greedy_decode, one_hot_rows, token_error_rate};
use crate::optim::{adam_step, AdamParams, AdamState};
use crate::tensor::{fmt_shape, Tensor};

/// Default number of refinement iterations.
pub const DEFAULT_ITERATIONS: usize = 100;

/// Iteration stride at which the trajectory records a decoded error rate
/// (endpoints are always recorded when a reference is supplied).
pub const WER_RECORD_STRIDE: usize = 10;

/// Step size that works well at this model scale for the given embedding
/// source; attention-pooled embeddings sit on a flatter score surface and
/// need a larger step.
pub fn default_step_size(source: EmbeddingSource) -> f64 {
    match source {
        EmbeddingSource::Mhfa => 4.0,
        _ => 1.0,
    }
}

/// What quantity the refinement drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbOptObjective {
    /// Maximize the summed pre-softmax true-class score (the default).
    ScoreMax,
    /// Minimize the per-frame cross-entropy against the same labels.
    CeMin,
}

/// How a gradient becomes a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepDirection {
    /// Bias-corrected moment direction (the default).
    AdamDirection,
    /// The raw gradient scaled by the step size.
    RawGradient,
}

/// Refinement settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbOptConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub objective: EmbOptObjective,
    pub optimizer: StepDirection,
}

impl Default for EmbOptConfig {
    fn default() -> Self {
        EmbOptConfig {
            step_size: 1.0,
            iterations: DEFAULT_ITERATIONS,
            objective: EmbOptObjective::ScoreMax,
            optimizer: StepDirection::AdamDirection,
        }
    }
}

impl EmbOptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::config(format!(
                "embedding refinement step size must be positive and finite, got {}",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// The visited embeddings with their scores; `embeddings[n]` is the state
/// after `n` steps and `scores[n]` its summed true-class score. A run that
/// hits a non-finite value stops early, keeps everything recorded up to
/// that point, and notes the reason in `abort`.
#[derive(Debug, Clone)]
pub struct EmbeddingTrajectory {
    pub embeddings: Vec<Tensor>,
    pub scores: Vec<f64>,
    /// `(iteration, pooled token error rate)` at the recorded iterations;
    /// empty when no reference transcript was supplied.
    pub wers: Vec<(usize, f64)>,
    pub abort: Option<String>,
}

impl EmbeddingTrajectory {
    pub fn initial(&self) -> &Tensor {
        &self.embeddings[0]
    }

    pub fn last(&self) -> &Tensor {
        self.embeddings.last().expect("trajectory always holds the starting point")
    }

    pub fn initial_score(&self) -> Option<f64> {
        self.scores.first().copied()
    }

    pub fn final_score(&self) -> Option<f64> {
        self.scores.last().copied()
    }

    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }

    /// Turn an aborted run into the error it recorded, keeping a completed
    /// run as-is.
    pub fn into_result(self) -> Result<EmbeddingTrajectory> {
        match &self.abort {
            Some(reason) => Err(Error::non_finite(reason.clone())),
            None => Ok(self),
        }
    }
}

/// Sum of the pre-softmax logits picked out by the frame labels:
/// `Σ_t logits[t, c_t]`.
pub fn true_class_score(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    check_score_args(logits.shape(), labels)?;
    let classes = logits.shape()[1];
    Ok(labels.iter().enumerate().map(|(t, &c)| logits.data()[t * classes + c]).sum())
}

/// Tape form of [`true_class_score`]: differentiable through the logits.
pub fn true_class_score_node(
    tape: &mut Tape,
    logits: crate::autodiff::TensorId,
    labels: &[usize],
) -> Result<crate::autodiff::TensorId> {
    let shape = tape.value(logits).shape().to_vec();
    check_score_args(&shape, labels)?;
    let mask = tape.leaf(one_hot_rows(labels, shape[1], 1.0))?;
    let picked = tape.mul(logits, mask)?;
    tape.sum_all(picked)
}

fn check_score_args(shape: &[usize], labels: &[usize]) -> Result<()> {
    if shape.len() != 2 {
        return Err(Error::shape(
            "true_class_score",
            format!("logits must be [T, classes], got {}", fmt_shape(shape)),
        ));
    }
    if labels.len() != shape[0] {
        return Err(Error::shape(
            "true_class_score",
            format!("{} labels against {} logit frames", labels.len(), shape[0]),
        ));
    }
    if let Some(&c) = labels.iter().find(|&&c| c >= shape[1]) {
        return Err(Error::contract(format!(
            "true_class_score: label {c} out of range for {} classes",
            shape[1]
        )));
    }
    Ok(())
}

/// Frame labels for refinement, produced by running the frozen model itself
/// over features of the clean target utterance: the per-frame argmax of the
/// logits (ties to the lowest index).
pub fn pseudo_label_frames(
    model: &TsAsrModel,
    stack: &LayerFeatureStack,
    embedding: &Tensor,
) -> Result<Vec<usize>> {
    let logits = forward_logits(model, stack, embedding)?;
    let classes = logits.shape()[1];
    let mut labels = Vec::with_capacity(logits.shape()[0]);
    for t in 0..logits.shape()[0] {
        let row = logits.row(t);
        let mut best = 0usize;
        for c in 1..classes {
            if row[c] > row[best] {
                best = c;
            }
        }
        labels.push(best);
    }
    Ok(labels)
}

/// One frozen forward pass: layer stack + embedding → logits value.
fn forward_logits(
    model: &TsAsrModel,
    stack: &LayerFeatureStack,
    embedding: &Tensor,
) -> Result<Tensor> {
    let flat = stack.flattened()?;
    let mut tape = Tape::new();
    tape.freeze_params(true);
    let flat_id = tape.leaf(flat)?;
    let features = model.features_from_stack(&mut tape, flat_id)?;
    let e_id = tape.leaf(embedding.clone())?;
    let logits = model.forward(&mut tape, features, e_id)?;
    Ok(tape.value(logits).clone())
}

/// Refine `e0` for `config.iterations` steps against the frozen `model` on
/// one utterance's upstream layer `stack`, driving the summed true-class
/// score of `labels` up (or the cross-entropy down, depending on the
/// objective). Only the embedding moves; every model parameter, the layer
/// weights included, stays untouched.
///
/// When `reference` tokens are given, the trajectory also records the
/// greedy-decoded token error rate at iteration 0, every
/// [`WER_RECORD_STRIDE`] iterations, and at the final iteration.
pub fn optimize_embedding(
    model: &TsAsrModel,
    stack: &LayerFeatureStack,
    labels: &[usize],
    e0: &Tensor,
    config: &EmbOptConfig,
    reference: Option<&[usize]>,
) -> Result<EmbeddingTrajectory> {
    config.validate()?;
    if e0.rank() != 1 || e0.numel() != model.d_emb() {
        return Err(Error::shape(
            "optimize_embedding",
            format!(
                "starting embedding {} against model width {}",
                fmt_shape(e0.shape()),
                model.d_emb()
            ),
        ));
    }
    if labels.len() != stack.t_frames() {
        return Err(Error::shape(
            "optimize_embedding",
            format!("{} frame labels against {} feature frames", labels.len(), stack.t_frames()),
        ));
    }
    if let Some(r) = reference {
        if r.is_empty() {
            return Err(Error::contract(
                "optimize_embedding: an empty reference transcript cannot be scored",
            ));
        }
    }
    let flat = stack.flattened()?;

    let mut trajectory = EmbeddingTrajectory {
        embeddings: vec![e0.clone()],
        scores: Vec::with_capacity(config.iterations + 1),
        wers: Vec::new(),
        abort: None,
    };
    let mut current = e0.clone();
    let mut adam = AdamState::new(current.numel());
    let hp = AdamParams::default();

    for n in 0..=config.iterations {
        let last = n == config.iterations;
        let wer_due = reference.filter(|_| n % WER_RECORD_STRIDE == 0 || last);
        match iteration_step(model, &flat, labels, &current, config, wer_due, !last, &mut adam, &hp)
        {
            Ok((score, wer, next)) => {
                trajectory.scores.push(score);
                if let Some(w) = wer {
                    trajectory.wers.push((n, w));
                }
                if let Some(next) = next {
                    current = next;
                    trajectory.embeddings.push(current.clone());
                }
            }
            // A numeric blowup ends the run but keeps what it produced;
            // anything else (shape, contract) is a caller error.
            Err(e) if e.exit_code() == 3 => {
                trajectory.abort = Some(format!("iteration {n}: {e}"));
                return Ok(trajectory);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(trajectory)
}

/// One refinement iteration at `current`: evaluate the score (and the
/// decoded error rate when `wer_reference` is supplied), then — unless this
/// is the final evaluation-only pass — take one step and return the next
/// embedding. Both objectives are phrased as a descent direction so one
/// step routine serves both: ascending the score means descending its
/// negation.
#[allow(clippy::too_many_arguments)]
fn iteration_step(
    model: &TsAsrModel,
    flat: &Tensor,
    labels: &[usize],
    current: &Tensor,
    config: &EmbOptConfig,
    wer_reference: Option<&[usize]>,
    step: bool,
    adam: &mut AdamState,
    hp: &AdamParams,
) -> Result<(f64, Option<f64>, Option<Tensor>)> {
    let mut tape = Tape::new();
    tape.freeze_params(true);
    let flat_id = tape.leaf(flat.clone())?;
    let features = model.features_from_stack(&mut tape, flat_id)?;
    let e_id = tape.leaf_grad(current.clone())?;
    let logits = model.forward(&mut tape, features, e_id)?;
    let logits_value = tape.value(logits).clone();

    let score = true_class_score(&logits_value, labels)?;
    if !score.is_finite() {
        return Err(Error::non_finite(format!("true-class score {score}")));
    }
    let wer = match wer_reference {
        Some(r) => {
            let decoded = greedy_decode(&logits_value)?;
            Some(token_error_rate(r, &decoded)?)
        }
        None => None,
    };
    if !step {
        return Ok((score, wer, None));
    }

    let objective_node = match config.objective {
        EmbOptObjective::ScoreMax => true_class_score_node(&mut tape, logits, labels)?,
        EmbOptObjective::CeMin => frame_cross_entropy_loss(&mut tape, logits, labels)?,
    };
    let grads = tape.backward(objective_node)?;
    let raw = grads.get_or_zeros(e_id, current.shape());
    if raw.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("embedding gradient"));
    }
    let descent: Vec<f64> = match config.objective {
        EmbOptObjective::ScoreMax => raw.data().iter().map(|g| -g).collect(),
        EmbOptObjective::CeMin => raw.data().to_vec(),
    };

    let mut next = current.clone();
    match config.optimizer {
        StepDirection::RawGradient => {
            for (v, d) in next.data_mut().iter_mut().zip(&descent) {
                *v -= config.step_size * d;
            }
        }
        StepDirection::AdamDirection => {
            adam_step(next.data_mut(), &descent, adam, hp, config.step_size)?;
        }
    }
    Ok((score, wer, Some(next)))
}

/// Header line for a trajectory CSV covering embeddings of width `d_emb`.
pub fn trajectory_csv_header(d_emb: usize) -> String {
    let mut line = String::from("example_id,iteration,score,wer");
    for i in 0..d_emb {
        let _ = write!(line, ",e_{i}");
    }
    line.push('\n');
    line
}

/// Append one trajectory's rows (one per recorded iteration; the wer cell
/// is empty at iterations where no decode was recorded).
pub fn append_trajectory_csv(out: &mut String, example_id: &str, trajectory: &EmbeddingTrajectory) {
    for (n, (e, score)) in trajectory.embeddings.iter().zip(&trajectory.scores).enumerate() {
        let _ = write!(out, "{example_id},{n},{score:?},");
        if let Some(&(_, wer)) = trajectory.wers.iter().find(|(at, _)| *at == n) {
            let _ = write!(out, "{wer:?}");
        }
        for v in e.data() {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::autodiff::check::fd_gradient;
    use crate::auxnet::D_EMB;
    use crate::frontend::{D_UP, N_LAYERS};
    use crate::models::{AsrConditionSite, ConformerConfig};
    use crate::objectives::frame_cross_entropy;
    use crate::params::HasParams;

    const VOCAB: usize = 5;

    fn model(seed: u64) -> TsAsrModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TsAsrModel::new(
            "asr",
            &ConformerConfig::default(),
            D_EMB,
            VOCAB,
            AsrConditionSite::AfterFirstLinear,
            &mut rng,
        )
        .unwrap()
    }

    fn random_stack(t: usize, seed: u64) -> LayerFeatureStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..N_LAYERS)
            .map(|_| {
                Tensor::new(
                    vec![t, D_UP],
                    (0..t * D_UP).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
                .unwrap()
            })
            .collect();
        LayerFeatureStack { layers }
    }

    fn random_embedding(seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::vector((0..D_EMB).map(|_| rng.random_range(-0.5..0.5)).collect())
    }

    fn random_labels(t: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..t).map(|_| rng.random_range(0..VOCAB + 1)).collect()
    }

    fn param_fingerprint(model: &TsAsrModel) -> Vec<(String, Vec<u64>)> {
        let mut out = Vec::new();
        model.visit_params(&mut |p| {
            out.push((p.name().to_string(), p.value().data().iter().map(|v| v.to_bits()).collect()))
        });
        out
    }

    #[test]
    fn all_zero_logits_score_zero() {
        let logits = Tensor::zeros(&[4, 3]);
        assert_eq!(true_class_score(&logits, &[0, 1, 2, 1]).unwrap(), 0.0);
    }

    #[test]
    fn two_frame_score_by_direct_indexing() {
        let logits = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(true_class_score(&logits, &[1, 0]).unwrap(), 5.0);
    }

    #[test]
    fn score_is_not_a_disguised_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let logits =
            Tensor::new(vec![3, 4], (0..12).map(|_| rng.random_range(-2.0..2.0)).collect())
                .unwrap();
        let labels = [1usize, 0, 3];
        let score = true_class_score(&logits, &labels).unwrap();
        let ce = frame_cross_entropy(&logits, &labels).unwrap();
        // The pre-softmax score keeps the log-partition terms that the
        // cross-entropy subtracts off, so the two must differ on generic
        // logits.
        assert!((score + ce * 3.0).abs() > 1e-6, "score {score} vs -ce*T {}", -ce * 3.0);
    }

    #[test]
    fn score_rejects_mismatched_and_out_of_range_labels() {
        let logits = Tensor::zeros(&[2, 3]);
        assert!(true_class_score(&logits, &[0]).is_err());
        assert!(true_class_score(&logits, &[0, 3]).is_err());
    }

    #[test]
    fn score_node_gradient_is_the_label_indicator() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits =
            Tensor::new(vec![3, 4], (0..12).map(|_| rng.random_range(-1.0..1.0)).collect())
                .unwrap();
        let labels = [2usize, 0, 3];
        let mut tape = Tape::new();
        let x = tape.leaf_grad(logits.clone()).unwrap();
        let s = true_class_score_node(&mut tape, x, &labels).unwrap();
        assert_eq!(tape.value(s).scalar_value().unwrap(), true_class_score(&logits, &labels).unwrap());
        let grads = tape.backward(s).unwrap();
        let expected = one_hot_rows(&labels, 4, 1.0);
        assert_eq!(grads.get(x).unwrap().data(), expected.data());
    }

    #[test]
    fn pseudo_labels_cover_every_frame_deterministically() {
        let m = model(11);
        let stack = random_stack(6, 12);
        let e = random_embedding(13);
        let a = pseudo_label_frames(&m, &stack, &e).unwrap();
        let b = pseudo_label_frames(&m, &stack, &e).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, b);
        assert!(a.iter().all(|&c| c <= VOCAB));
    }

    #[test]
    fn zero_iterations_returns_only_the_start() {
        let m = model(20);
        let stack = random_stack(4, 21);
        let e0 = random_embedding(22);
        let cfg = EmbOptConfig { iterations: 0, ..EmbOptConfig::default() };
        let labels = random_labels(4, 23);
        let traj = optimize_embedding(&m, &stack, &labels, &e0, &cfg, None).unwrap();
        assert_eq!(traj.embeddings.len(), 1);
        assert_eq!(traj.scores.len(), 1);
        assert_eq!(traj.initial().data(), e0.data());
        assert!(traj.completed());
    }

    #[test]
    fn zero_gradient_is_a_fixed_point_for_both_step_rules() {
        // Zeroing the projection that follows the conditioning site cuts
        // the only path from the embedding to the logits, so the gradient
        // on the embedding is exactly zero.
        let mut m = model(30);
        m.visit_params_mut(&mut |p| {
            if p.name().ends_with(".linear_proj.w") {
                let shape = p.value().shape().to_vec();
                p.set_value(Tensor::zeros(&shape));
            }
        });
        let stack = random_stack(4, 31);
        let e0 = random_embedding(32);
        let labels = random_labels(4, 33);
        for optimizer in [StepDirection::RawGradient, StepDirection::AdamDirection] {
            let cfg = EmbOptConfig { iterations: 1, optimizer, ..EmbOptConfig::default() };
            let traj = optimize_embedding(&m, &stack, &labels, &e0, &cfg, None).unwrap();
            assert_eq!(traj.embeddings.len(), 2);
            assert_eq!(traj.last().data(), e0.data(), "{optimizer:?} moved off a flat point");
        }
    }

    #[test]
    fn small_raw_steps_increase_the_score_to_first_order() {
        let mut gated = 0;
        for seed in 0..50u64 {
            let m = model(100 + seed);
            let stack = random_stack(4, 200 + seed);
            let e0 = random_embedding(300 + seed);
            let labels = random_labels(4, 400 + seed);
            let cfg = EmbOptConfig {
                step_size: 1e-4,
                iterations: 1,
                objective: EmbOptObjective::ScoreMax,
                optimizer: StepDirection::RawGradient,
            };
            let traj = optimize_embedding(&m, &stack, &labels, &e0, &cfg, None).unwrap();
            let moved: f64 = traj.embeddings[1]
                .data()
                .iter()
                .zip(traj.embeddings[0].data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let grad_norm = moved / cfg.step_size;
            if grad_norm > 1e-8 {
                gated += 1;
                assert!(
                    traj.scores[1] > traj.scores[0],
                    "seed {seed}: score fell from {} to {} with gradient norm {grad_norm}",
                    traj.scores[0],
                    traj.scores[1]
                );
            }
        }
        assert!(gated >= 45, "only {gated} of 50 instances had a usable gradient");
    }

    #[test]
    fn ce_objective_descends_cross_entropy() {
        for seed in 0..10u64 {
            let m = model(500 + seed);
            let stack = random_stack(4, 600 + seed);
            let e0 = random_embedding(700 + seed);
            let labels = random_labels(4, 800 + seed);
            let cfg = EmbOptConfig {
                step_size: 1e-4,
                iterations: 1,
                objective: EmbOptObjective::CeMin,
                optimizer: StepDirection::RawGradient,
            };
            let traj = optimize_embedding(&m, &stack, &labels, &e0, &cfg, None).unwrap();
            let before = forward_logits(&m, &stack, &traj.embeddings[0]).unwrap();
            let after = forward_logits(&m, &stack, &traj.embeddings[1]).unwrap();
            let moved: f64 = traj.embeddings[1]
                .data()
                .iter()
                .zip(traj.embeddings[0].data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if moved / cfg.step_size > 1e-8 {
                let ce0 = frame_cross_entropy(&before, &labels).unwrap();
                let ce1 = frame_cross_entropy(&after, &labels).unwrap();
                assert!(ce1 < ce0, "seed {seed}: cross-entropy rose from {ce0} to {ce1}");
            }
        }
    }

    #[test]
    fn adam_first_step_matches_the_moment_update_on_the_negated_gradient() {
        let m = model(40);
        let stack = random_stack(5, 41);
        let e0 = random_embedding(42);
        let labels = random_labels(5, 43);

        // Reference gradient from a hand-built frozen pass.
        let flat = stack.flattened().unwrap();
        let mut tape = Tape::new();
        tape.freeze_params(true);
        let flat_id = tape.leaf(flat).unwrap();
        let features = m.features_from_stack(&mut tape, flat_id).unwrap();
        let e_id = tape.leaf_grad(e0.clone()).unwrap();
        let logits = m.forward(&mut tape, features, e_id).unwrap();
        let s = true_class_score_node(&mut tape, logits, &labels).unwrap();
        let grads = tape.backward(s).unwrap();
        let descent: Vec<f64> = grads.get(e_id).unwrap().data().iter().map(|g| -g).collect();

        let mut expected = e0.clone();
        let mut state = AdamState::new(expected.numel());
        adam_step(expected.data_mut(), &descent, &mut state, &AdamParams::default(), 0.05).unwrap();

        let cfg = EmbOptConfig {
            step_size: 0.05,
            iterations: 1,
            objective: EmbOptObjective::ScoreMax,
            optimizer: StepDirection::AdamDirection,
        };
        let traj = optimize_embedding(&m, &stack, &labels, &e0, &cfg, None).unwrap();
        assert_eq!(traj.last().data(), expected.data());
    }

    #[test]
    fn trajectories_are_deterministic() {
        let m = model(50);
        let stack = random_stack(5, 51);
        let e0 = random_embedding(52);
        let labels = random_labels(5, 53);
        let cfg = EmbOptConfig { step_size: 0.05, iterations: 3, ..EmbOptConfig::default() };
        let a = optimize_embedding(&m, &stack, &labels, &e0, &cfg, None).unwrap();
        let b = optimize_embedding(&m, &stack, &labels, &e0, &cfg, None).unwrap();
        assert_eq!(a.scores, b.scores);
        for (x, y) in a.embeddings.iter().zip(&b.embeddings) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn model_parameters_are_bit_identical_after_a_run() {
        let m = model(60);
        let before = param_fingerprint(&m);
        let stack = random_stack(5, 61);
        let e0 = random_embedding(62);
        let labels = random_labels(5, 63);
        let cfg = EmbOptConfig { step_size: 0.5, iterations: 4, ..EmbOptConfig::default() };
        optimize_embedding(&m, &stack, &labels, &e0, &cfg, None).unwrap();
        assert_eq!(param_fingerprint(&m), before);
    }

    #[test]
    fn non_finite_start_aborts_with_a_partial_trajectory() {
        let m = model(70);
        let stack = random_stack(4, 71);
        let e0 = Tensor::vector(vec![1e308; D_EMB]);
        let labels = random_labels(4, 72);
        let cfg = EmbOptConfig { iterations: 5, ..EmbOptConfig::default() };
        let traj = optimize_embedding(&m, &stack, &labels, &e0, &cfg, None).unwrap();
        assert!(!traj.completed());
        assert_eq!(traj.embeddings.len(), 1);
        assert!(traj.scores.iter().all(|s| s.is_finite()));
        assert!(traj.abort.as_deref().unwrap().contains("iteration 0"));
        let err = traj.into_result().unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn score_gradient_matches_finite_differences_through_the_model() {
        let m = model(80);
        let stack = random_stack(4, 81);
        let e0 = random_embedding(82);
        let labels = random_labels(4, 83);
        let flat = stack.flattened().unwrap();

        let mut tape = Tape::new();
        tape.freeze_params(true);
        let flat_id = tape.leaf(flat.clone()).unwrap();
        let features = m.features_from_stack(&mut tape, flat_id).unwrap();
        let e_id = tape.leaf_grad(e0.clone()).unwrap();
        let logits = m.forward(&mut tape, features, e_id).unwrap();
        let s = true_class_score_node(&mut tape, logits, &labels).unwrap();
        let grads = tape.backward(s).unwrap();
        let analytic = grads.get(e_id).unwrap().clone();

        let mut probe = e0.data().to_vec();
        let fd = fd_gradient(&mut probe, 1e-5, |values| {
            let e = Tensor::vector(values.to_vec());
            let logits = forward_logits(&m, &stack, &e)?;
            true_class_score(&logits, &labels)
        })
        .unwrap();
        for (i, (a, f)) in analytic.data().iter().zip(&fd).enumerate() {
            let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-3);
            assert!(rel < 1e-4, "coordinate {i}: analytic {a} vs fd {f}");
        }
    }

    #[test]
    fn csv_rows_cover_every_iteration_with_sparse_wer() {
        let m = model(90);
        let stack = random_stack(4, 91);
        let e0 = random_embedding(92);
        let labels = random_labels(4, 93);
        let cfg = EmbOptConfig { step_size: 0.05, iterations: 12, ..EmbOptConfig::default() };
        let reference = vec![1usize, 3];
        let traj = optimize_embedding(&m, &stack, &labels, &e0, &cfg, Some(&reference)).unwrap();
        assert_eq!(traj.embeddings.len(), 13);
        let recorded: Vec<usize> = traj.wers.iter().map(|(n, _)| *n).collect();
        assert_eq!(recorded, vec![0, 10, 12]);

        let mut csv = trajectory_csv_header(D_EMB);
        append_trajectory_csv(&mut csv, "ex0", &traj);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 14);
        assert_eq!(lines[0].split(',').count(), 4 + D_EMB);
        assert!(lines[1].starts_with("ex0,0,"));
        // Row for iteration 1 has an empty wer cell; row for iteration 0
        // has a filled one.
        assert!(!lines[1].split(',').nth(3).unwrap().is_empty());
        assert!(lines[2].split(',').nth(3).unwrap().is_empty());
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 4 + D_EMB);
        }
    }

    #[test]
    fn default_step_sizes_follow_the_embedding_source() {
        assert_eq!(default_step_size(EmbeddingSource::Fbank), 1.0);
        assert_eq!(default_step_size(EmbeddingSource::SpeakerCode), 1.0);
        assert_eq!(default_step_size(EmbeddingSource::Mhfa), 4.0);
        assert!(EmbOptConfig { step_size: 0.0, ..EmbOptConfig::default() }.validate().is_err());
        assert!(EmbOptConfig { step_size: -1.0, ..EmbOptConfig::default() }.validate().is_err());
    }
}
