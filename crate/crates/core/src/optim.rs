//! First-order optimization: bias-corrected adaptive moments plus the
//! warmup/linear-decay learning-rate schedule used by every task.

use serde::{Deserialize, Serialize};

use crate::autodiff::Gradients;
use crate::error::{Error, Result};
use crate::params::HasParams;

/// Moment decay hyperparameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter optimizer state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(numel: usize) -> Self {
        AdamState {
            m: vec![0.0; numel],
            v: vec![0.0; numel],
            t: 0,
        }
    }
}

/// One bias-corrected moment update of `value` against `grad` at the given
/// learning rate. A zero gradient leaves the value untouched while the
/// moments keep decaying.
pub fn adam_step(
    value: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    hp: &AdamParams,
    rate: f64,
) -> Result<()> {
    if value.len() != grad.len() || value.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "value {} / grad {} / state {}",
                value.len(),
                grad.len(),
                state.m.len()
            ),
        ));
    }
    state.t += 1;
    let bc1 = 1.0 - hp.beta1.powi(state.t as i32);
    let bc2 = 1.0 - hp.beta2.powi(state.t as i32);
    for ((v, &g), (m, s)) in value
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *s = hp.beta2 * *s + (1.0 - hp.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *s / bc2;
        *v -= rate * m_hat / (v_hat.sqrt() + hp.eps);
    }
    Ok(())
}

/// Optimizer over a model's named parameters. State is keyed by parameter
/// name in sorted order so training, checkpointing, and resumption are all
/// order-deterministic.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamOptimizer {
    pub hp: AdamParams,
    pub states: std::collections::BTreeMap<String, AdamState>,
}

impl AdamOptimizer {
    pub fn new(hp: AdamParams) -> Self {
        AdamOptimizer {
            hp,
            states: Default::default(),
        }
    }

    /// Apply one step to every parameter that received a gradient.
    /// Parameters absent from `grads` (detached from this loss) are skipped.
    pub fn step(&mut self, model: &mut dyn HasParams, grads: &Gradients, rate: f64) -> Result<()> {
        let mut result = Ok(());
        model.visit_params_mut(&mut |p| {
            if result.is_err() {
                return;
            }
            let Some(g) = grads.by_name(p.name()) else {
                return;
            };
            let state = self
                .states
                .entry(p.name().to_string())
                .or_insert_with(|| AdamState::new(g.numel()));
            let g_data = g.data().to_vec();
            result = adam_step(
                p.value_mut().data_mut(),
                &g_data,
                state,
                &self.hp,
                rate,
            );
        });
        result
    }
}

/// Linear warmup to a peak rate followed by linear decay to zero.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WarmupLinearSchedule {
    pub peak_rate: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl WarmupLinearSchedule {
    pub fn new(peak_rate: f64, warmup_steps: u64, total_steps: u64) -> Result<Self> {
        if warmup_steps >= total_steps {
            return Err(Error::config(format!(
                "schedule: warmup ({warmup_steps}) must be shorter than total ({total_steps})"
            )));
        }
        if peak_rate <= 0.0 {
            return Err(Error::config("schedule: peak rate must be positive"));
        }
        Ok(WarmupLinearSchedule {
            peak_rate,
            warmup_steps,
            total_steps,
        })
    }

    /// Learning rate at `step` (0-based steps; the rate ramps 0 → peak over
    /// the warmup, then decays linearly to 0 at `total_steps`). Steps past
    /// the end clamp to zero with a warning rather than failing.
    pub fn rate(&self, step: u64) -> f64 {
        if step <= self.warmup_steps {
            self.peak_rate * step as f64 / self.warmup_steps as f64
        } else if step <= self.total_steps {
            self.peak_rate * (self.total_steps - step) as f64
                / (self.total_steps - self.warmup_steps) as f64
        } else {
            log::warn!(
                "schedule: step {} is past total_steps {}; rate clamped to 0",
                step,
                self.total_steps
            );
            0.0
        }
    }
}
