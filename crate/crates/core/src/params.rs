//! Named trainable parameters and the visitor trait models implement.
//!
//! A [`Param`] owns its tensor and a stable dotted name ("encoder.0.w").
//! Names are the join key between forward passes (tape registration),
//! gradients, the optimizer's per-parameter state, and checkpoints.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Param {
    name: String,
    value: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Param {
            name: name.into(),
            value,
        }
    }

    /// Gaussian init scaled like 1/√fan_in — the right magnitude for the
    /// tanh/sigmoid/relu stacks used throughout.
    pub fn randn(name: impl Into<String>, shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| std * gauss(rng)).collect();
        Param {
            name: name.into(),
            value: Tensor::new(shape.to_vec(), data).expect("consistent shape"),
        }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Param {
            name: name.into(),
            value: Tensor::zeros(shape),
        }
    }

    pub fn full(name: impl Into<String>, shape: &[usize], v: f64) -> Self {
        Param {
            name: name.into(),
            value: Tensor::full(shape, v),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor {
        &mut self.value
    }

    pub fn set_value(&mut self, t: Tensor) {
        self.value = t;
    }
}

/// Box–Muller standard normal; kept in-crate so parameter initialization is
/// bit-reproducible from the seed alone.
pub(crate) fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.random();
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let u2: f64 = rng.random();
        return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    }
}

/// Anything holding trainable parameters.
pub trait HasParams {
    fn visit_params(&self, f: &mut dyn FnMut(&Param));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params(&mut |p| names.push(p.name().to_string()));
        names
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value().numel());
        n
    }

    /// Snapshot of every parameter tensor, keyed by name.
    fn named_values(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.push((p.name().to_string(), p.value().clone())));
        out
    }
}
