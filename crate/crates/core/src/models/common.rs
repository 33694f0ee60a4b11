//! Small trainable building blocks shared by the auxiliary encoders and the
//! downstream heads.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, TensorId};
use crate::error::Result;
use crate::params::{HasParams, Param};
use crate::tensor::Tensor;

/// Dense layer `y = x W + b` with `W` `[d_in, d_out]` and zero-initialised
/// bias.  Applies to `[T, d_in]` inputs row-wise and to 1-D `[d_in]` vectors.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
}

impl Linear {
    /// Gaussian `1/sqrt(d_in)` weight init; `name` prefixes both parameters.
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = 1.0 / libm::sqrt(d_in as f64);
        Linear {
            w: Param::randn(format!("{name}.w"), &[d_in, d_out], std, rng),
            b: Param::zeros(format!("{name}.b"), &[d_out]),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.value().shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.w.value().shape()[1]
    }

    pub fn apply(&self, tape: &mut Tape, x: TensorId) -> Result<TensorId> {
        let w = tape.param(&self.w)?;
        let b = tape.param(&self.b)?;
        let h = tape.matmul(x, w)?;
        tape.add_row(h, b)
    }
}

impl HasParams for Linear {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.w);
        f(&self.b);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

/// Speaker conditioning: Hadamard product of every feature frame with the
/// embedding, broadcast over time.  `features` is `[T, D]`, `embedding` `[D]`.
pub fn condition(tape: &mut Tape, features: TensorId, embedding: TensorId) -> Result<TensorId> {
    let fs = tape.value(features).shape().to_vec();
    let emb = tape.value(embedding);
    if fs.len() != 2 || emb.rank() != 1 || fs[1] != emb.numel() {
        return Err(crate::error::Error::shape(
            "condition",
            format!(
                "features {} cannot be conditioned by embedding {}",
                crate::tensor::fmt_shape(&fs),
                crate::tensor::fmt_shape(emb.shape())
            ),
        ));
    }
    tape.mul_row(features, embedding)
}

/// Swish activation `x * sigmoid(x)`.
pub fn swish(tape: &mut Tape, x: TensorId) -> Result<TensorId> {
    let s = tape.sigmoid(x)?;
    tape.mul(x, s)
}

/// Gated linear unit over the column halves of `[T, 2D]`: first half gated
/// by the sigmoid of the second.
pub fn glu(tape: &mut Tape, x: TensorId) -> Result<TensorId> {
    let cols = {
        let v = tape.value(x);
        if v.rank() != 2 || v.shape()[1] % 2 != 0 {
            return Err(crate::error::Error::shape(
                "glu",
                format!("needs [T, 2D] input, got {}", crate::tensor::fmt_shape(v.shape())),
            ));
        }
        v.shape()[1]
    };
    let a = tape.slice(x, 1, 0, cols / 2)?;
    let b = tape.slice(x, 1, cols / 2, cols / 2)?;
    let gate = tape.sigmoid(b)?;
    tape.mul(a, gate)
}

/// Absolute sinusoidal positional encoding `[t_frames, d_model]`:
/// `pe[t, 2i] = sin(t / 10000^(2i/d))`, `pe[t, 2i+1] = cos(...)`.
pub fn sinusoidal_pe(t_frames: usize, d_model: usize) -> Tensor {
    let mut data = vec![0.0; t_frames * d_model];
    for t in 0..t_frames {
        for i in 0..d_model.div_ceil(2) {
            let rate = libm::pow(10000.0, -((2 * i) as f64) / d_model as f64);
            let angle = t as f64 * rate;
            data[t * d_model + 2 * i] = libm::sin(angle);
            if 2 * i + 1 < d_model {
                data[t * d_model + 2 * i + 1] = libm::cos(angle);
            }
        }
    }
    Tensor::new(vec![t_frames, d_model], data).expect("consistent shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn applies_to_matrices_and_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lin = Linear::new("t", 3, 2, &mut rng);
        assert_eq!((lin.d_in(), lin.d_out()), (3, 2));

        let mut tape = Tape::new();
        let m = tape.leaf(Tensor::new(vec![2, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap()).unwrap();
        let out = lin.apply(&mut tape, m).unwrap();
        assert_eq!(tape.value(out).shape(), &[2, 2]);
        // Rows of an identity-selector input reproduce weight rows (bias is zero).
        assert_eq!(tape.value(out).row(0), lin.w.value().row(0));

        let v = tape.leaf(Tensor::vector(vec![1.0, 0.0, 0.0])).unwrap();
        let out_v = lin.apply(&mut tape, v).unwrap();
        assert_eq!(tape.value(out_v).shape(), &[2]);
        assert_eq!(tape.value(out_v).data(), lin.w.value().row(0));
    }

    #[test]
    fn parameters_enumerate_weight_then_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lin = Linear::new("enc.l0", 4, 4, &mut rng);
        assert_eq!(lin.param_names(), vec!["enc.l0.w", "enc.l0.b"]);
    }

    fn random_features(t: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(
            vec![t, d],
            (0..t * d).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn ones_embedding_conditions_to_identity() {
        let feats = random_features(5, 4, 11);
        let mut tape = Tape::new();
        let f = tape.leaf(feats.clone()).unwrap();
        let ones = tape.leaf(Tensor::vector(vec![1.0; 4])).unwrap();
        let out = condition(&mut tape, f, ones).unwrap();
        assert_eq!(tape.value(out).data(), feats.data());
    }

    #[test]
    fn zeros_embedding_annihilates_features() {
        let feats = random_features(5, 4, 12);
        let mut tape = Tape::new();
        let f = tape.leaf(feats).unwrap();
        let zeros = tape.leaf(Tensor::vector(vec![0.0; 4])).unwrap();
        let out = condition(&mut tape, f, zeros).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conditioning_rejects_dimension_mismatch() {
        let mut tape = Tape::new();
        let f = tape.leaf(Tensor::zeros(&[5, 4])).unwrap();
        let e = tape.leaf(Tensor::vector(vec![1.0; 3])).unwrap();
        assert!(condition(&mut tape, f, e).is_err());
    }

    #[test]
    fn conditioning_gradient_on_the_embedding_matches_finite_differences() {
        use crate::autodiff::check::{grad_check, FD_EPS};
        let feats = random_features(6, 4, 13);
        let weights = random_features(6, 4, 14);
        let x0 = Tensor::vector(vec![0.3, -0.8, 1.2, 0.5]);
        let worst = grad_check(
            |tape, emb| {
                let f = tape.leaf(feats.clone())?;
                let cond = condition(tape, f, emb)?;
                let w = tape.leaf(weights.clone())?;
                let weighted = tape.mul(cond, w)?;
                tape.sum_all(weighted)
            },
            &x0,
            FD_EPS,
        )
        .unwrap();
        assert!(worst < 1e-4, "worst relative gradient error {worst:.3e}");
    }

    #[test]
    fn glu_gates_the_first_half_by_the_second() {
        let mut tape = Tape::new();
        let x = tape
            .leaf(Tensor::new(vec![1, 4], vec![2.0, -3.0, 0.0, 100.0]).unwrap())
            .unwrap();
        let out = glu(&mut tape, x).unwrap();
        let got = tape.value(out);
        assert_eq!(got.shape(), &[1, 2]);
        assert!((got.data()[0] - 2.0 * 0.5).abs() < 1e-12); // sigmoid(0) = 1/2
        assert!((got.data()[1] - -3.0).abs() < 1e-9); // sigmoid(100) ~= 1
    }

    #[test]
    fn swish_matches_its_definition() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![-1.0, 0.0, 2.0])).unwrap();
        let out = swish(&mut tape, x).unwrap();
        for (v, &xi) in tape.value(out).data().iter().zip(&[-1.0, 0.0, 2.0f64]) {
            let want = xi / (1.0 + libm::exp(-xi));
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn positional_encoding_distinguishes_positions_and_stays_bounded() {
        let pe = sinusoidal_pe(50, 8);
        assert_eq!(pe.shape(), &[50, 8]);
        assert!(pe.data().iter().all(|v| v.abs() <= 1.0));
        // Row 0 is [0, 1, 0, 1, ...]; all rows are pairwise distinct.
        for i in 0..4 {
            assert_eq!(pe.at2(0, 2 * i), 0.0);
            assert_eq!(pe.at2(0, 2 * i + 1), 1.0);
        }
        for a in 0..50 {
            for b in a + 1..50 {
                assert!(pe.row(a) != pe.row(b), "rows {a} and {b} identical");
            }
        }
    }
}
