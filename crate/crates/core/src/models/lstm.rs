//! Bidirectional LSTM layers built from tape primitives.
//!
//! Gate order inside the fused projections is input, forget, cell, output.
//! The forget-gate bias starts at 1 so fresh layers pass state through.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::params::{HasParams, Param};
use crate::tensor::{fmt_shape, Tensor};

/// One direction of an LSTM layer.
#[derive(Debug, Clone)]
pub struct LstmDirection {
    w: Param, // [d_in, 4H]
    u: Param, // [H, 4H]
    b: Param, // [4H]
    hidden: usize,
}

impl LstmDirection {
    pub fn new(name: &str, d_in: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = Param::randn(
            format!("{name}.w"),
            &[d_in, 4 * hidden],
            1.0 / libm::sqrt(d_in as f64),
            rng,
        );
        let u = Param::randn(
            format!("{name}.u"),
            &[hidden, 4 * hidden],
            1.0 / libm::sqrt(hidden as f64),
            rng,
        );
        let mut b = Param::zeros(format!("{name}.b"), &[4 * hidden]);
        for v in &mut b.value_mut().data_mut()[hidden..2 * hidden] {
            *v = 1.0;
        }
        LstmDirection { w, u, b, hidden }
    }

    /// Run the recurrence over `x` `[T, d_in]`, returning `[T, hidden]`.
    /// With `reverse` the sequence is processed back-to-front and the output
    /// is returned in original time order.
    pub fn run(&self, tape: &mut Tape, x: TensorId, reverse: bool) -> Result<TensorId> {
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 2 || shape[0] == 0 || shape[1] != self.w.value().shape()[0] {
            return Err(Error::shape(
                "lstm",
                format!(
                    "expected non-empty [T, {}] input, got {}",
                    self.w.value().shape()[0],
                    fmt_shape(&shape)
                ),
            ));
        }
        let t_frames = shape[0];
        let h = self.hidden;

        let xin = if reverse { tape.reverse_rows(x)? } else { x };
        // Input projection for every step at once; the per-step work is only
        // the recurrent half.
        let w = tape.param(&self.w)?;
        let b = tape.param(&self.b)?;
        let xw = tape.matmul(xin, w)?;
        let xwb = tape.add_row(xw, b)?; // [T, 4H]
        let u = tape.param(&self.u)?;

        let mut hidden_state = tape.leaf(Tensor::zeros(&[1, h]))?;
        let mut cell = tape.leaf(Tensor::zeros(&[1, h]))?;
        let mut outputs = Vec::with_capacity(t_frames);
        for step in 0..t_frames {
            let xrow = tape.slice(xwb, 0, step, 1)?; // [1, 4H]
            let hu = tape.matmul(hidden_state, u)?;
            let gates = tape.add(xrow, hu)?;
            let gi = tape.slice(gates, 1, 0, h)?;
            let gf = tape.slice(gates, 1, h, h)?;
            let gc = tape.slice(gates, 1, 2 * h, h)?;
            let go = tape.slice(gates, 1, 3 * h, h)?;
            let i = tape.sigmoid(gi)?;
            let f = tape.sigmoid(gf)?;
            let c_in = tape.tanh(gc)?;
            let o = tape.sigmoid(go)?;
            let keep = tape.mul(f, cell)?;
            let write = tape.mul(i, c_in)?;
            cell = tape.add(keep, write)?;
            let c_act = tape.tanh(cell)?;
            hidden_state = tape.mul(o, c_act)?;
            outputs.push(hidden_state);
        }
        let stacked = tape.concat(&outputs, 0)?; // [T, H]
        if reverse {
            tape.reverse_rows(stacked)
        } else {
            Ok(stacked)
        }
    }
}

impl HasParams for LstmDirection {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.w);
        f(&self.u);
        f(&self.b);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.u);
        f(&mut self.b);
    }
}

/// Bidirectional LSTM layer: forward and backward passes concatenated to
/// `[T, 2 * hidden]`.
#[derive(Debug, Clone)]
pub struct Blstm {
    fwd: LstmDirection,
    bwd: LstmDirection,
}

impl Blstm {
    pub fn new(name: &str, d_in: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Blstm {
            fwd: LstmDirection::new(&format!("{name}.fwd"), d_in, hidden, rng),
            bwd: LstmDirection::new(&format!("{name}.bwd"), d_in, hidden, rng),
        }
    }

    pub fn d_out(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn apply(&self, tape: &mut Tape, x: TensorId) -> Result<TensorId> {
        let f = self.fwd.run(tape, x, false)?;
        let b = self.bwd.run(tape, x, true)?;
        tape.concat(&[f, b], 1)
    }
}

impl HasParams for Blstm {
    fn visit_params(&self, f: &mut dyn FnMut(&Param)) {
        self.fwd.visit_params(f);
        self.bwd.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.fwd.visit_params_mut(f);
        self.bwd.visit_params_mut(f);
    }
}
