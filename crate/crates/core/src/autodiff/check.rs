//! Finite-difference verification of reverse-mode gradients.
//!
//! Central differences with a small step are the independent oracle for every
//! backward rule: the reverse sweep is only trusted where it matches them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::tensor::Tensor;

/// Default perturbation for central differences.
pub const FD_EPS: f64 = 1e-5;

/// Error floor for the relative comparison: below this magnitude the check
/// degrades gracefully into an absolute comparison, keeping finite-difference
/// round-off from flagging exact zero gradients.
const REL_FLOOR: f64 = 1e-3;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Maximum relative error between the tape gradient of `build`'s scalar
/// output w.r.t. `x0` and a central finite-difference estimate.
pub fn grad_check<F>(build: F, x0: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, TensorId) -> Result<TensorId>,
{
    let eval = |x: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let id = tape.leaf(x.clone())?;
        let out = build(&mut tape, id)?;
        tape.value(out).scalar_value()
    };

    let mut tape = Tape::new();
    let id = tape.leaf_grad(x0.clone())?;
    let out = build(&mut tape, id)?;
    if tape.value(out).numel() != 1 {
        return Err(Error::contract("grad_check: build must produce a scalar"));
    }
    let grads = tape.backward(out)?;
    let g = grads.get_or_zeros(id, x0.shape());

    let mut worst = 0.0f64;
    let mut probe = x0.clone();
    for i in 0..x0.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let fd = (plus - minus) / (2.0 * eps);
        worst = worst.max(rel_err(g.data()[i], fd));
    }
    Ok(worst)
}

/// Central finite differences of an arbitrary scalar evaluation with respect
/// to a mutable buffer (model parameters, embeddings, ...). The buffer is
/// restored before returning.
pub fn fd_gradient(
    values: &mut [f64],
    eps: f64,
    mut eval: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; values.len()];
    for i in 0..values.len() {
        let orig = values[i];
        values[i] = orig + eps;
        let plus = eval(values)?;
        values[i] = orig - eps;
        let minus = eval(values)?;
        values[i] = orig;
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// One op's aggregate result from [`grad_check_catalog`].
pub struct CatalogEntry {
    pub op: &'static str,
    pub cases: usize,
    pub max_rel_err: f64,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| uniform(rng, lo, hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

/// Values bounded away from zero: safe inputs for kinked ops like relu.
fn rand_tensor_off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = uniform(rng, 0.1, 2.0);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

/// Random weights used to collapse an op output to a scalar without washing
/// out structure (a plain sum would hide softmax-style constraints).
fn scalarize(tape: &mut Tape, out: TensorId, rng: &mut ChaCha8Rng) -> Result<TensorId> {
    let shape = tape.value(out).shape().to_vec();
    let w = tape.leaf(rand_tensor(rng, &shape, -1.0, 1.0))?;
    let prod = tape.mul(out, w)?;
    tape.sum_all(prod)
}

/// Run seeded finite-difference cases against every differentiable primitive
/// in the op catalog. Returns one entry per op with the worst relative error
/// observed; the engine passes when every entry stays under 1e-4.
pub fn grad_check_catalog(cases_per_op: usize, root_seed: u64) -> Result<Vec<CatalogEntry>> {
    let mut results = Vec::new();
    let mut run = |op: &'static str,
                   f: &mut dyn FnMut(&mut ChaCha8Rng) -> Result<f64>|
     -> Result<()> {
        let mut worst = 0.0f64;
        for case in 0..cases_per_op {
            let mut rng = rng::stream(root_seed, &[tag::GRAD_CHECK, hash_op(op), case as u64]);
            worst = worst.max(f(&mut rng)?);
        }
        results.push(CatalogEntry {
            op,
            cases: cases_per_op,
            max_rel_err: worst,
        });
        Ok(())
    };

    run("matmul", &mut |rng| {
        let (m, k, n) = (
            rng.random_range(1..5usize),
            rng.random_range(1..5usize),
            rng.random_range(1..5usize),
        );
        let a0 = rand_tensor(rng, &[m, k], -2.0, 2.0);
        let b0 = rand_tensor(rng, &[k, n], -2.0, 2.0);
        // Check both operands; a fresh weight sample per closure is fine
        // because each grad_check call is self-consistent.
        let b_fixed = b0.clone();
        let seed_rng = ChaCha8Rng::clone(rng);
        let ea = grad_check(
            |t, x| {
                let b = t.leaf(b_fixed.clone())?;
                let out = t.matmul(x, b)?;
                scalarize(t, out, &mut seed_rng.clone())
            },
            &a0,
            FD_EPS,
        )?;
        let a_fixed = a0.clone();
        let seed_rng2 = ChaCha8Rng::clone(rng);
        let eb = grad_check(
            |t, x| {
                let a = t.leaf(a_fixed.clone())?;
                let out = t.matmul(a, x)?;
                scalarize(t, out, &mut seed_rng2.clone())
            },
            &b0,
            FD_EPS,
        )?;
        // Vector forms: dot product and matrix-vector.
        let v0 = rand_tensor(rng, &[k], -2.0, 2.0);
        let m_fixed = rand_tensor(rng, &[k, n], -2.0, 2.0);
        let ev = grad_check(
            |t, x| {
                let m_id = t.leaf(m_fixed.clone())?;
                let out = t.matmul(x, m_id)?;
                t.sum_all(out)
            },
            &v0,
            FD_EPS,
        )?;
        let w0 = rand_tensor(rng, &[n], -2.0, 2.0);
        let m2_fixed = rand_tensor(rng, &[m, n], -2.0, 2.0);
        let ew = grad_check(
            |t, x| {
                let m_id = t.leaf(m2_fixed.clone())?;
                let out = t.matmul(m_id, x)?;
                t.sum_all(out)
            },
            &w0,
            FD_EPS,
        )?;
        Ok(ea.max(eb).max(ev).max(ew))
    })?;

    run("matmul_nt", &mut |rng| {
        let (m, k, n) = (
            rng.random_range(1..5usize),
            rng.random_range(1..5usize),
            rng.random_range(1..5usize),
        );
        let a0 = rand_tensor(rng, &[m, k], -2.0, 2.0);
        let b0 = rand_tensor(rng, &[n, k], -2.0, 2.0);
        let b_fixed = b0.clone();
        let r1 = ChaCha8Rng::clone(rng);
        let ea = grad_check(
            |t, x| {
                let b = t.leaf(b_fixed.clone())?;
                let out = t.matmul_nt(x, b)?;
                scalarize(t, out, &mut r1.clone())
            },
            &a0,
            FD_EPS,
        )?;
        let a_fixed = a0;
        let r2 = ChaCha8Rng::clone(rng);
        let eb = grad_check(
            |t, x| {
                let a = t.leaf(a_fixed.clone())?;
                let out = t.matmul_nt(a, x)?;
                scalarize(t, out, &mut r2.clone())
            },
            &b0,
            FD_EPS,
        )?;
        Ok(ea.max(eb))
    })?;

    run("add", &mut |rng| {
        let shape = [rng.random_range(1..4usize), rng.random_range(1..5usize)];
        let other = rand_tensor(rng, &shape, -2.0, 2.0);
        let x0 = rand_tensor(rng, &shape, -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let o = t.leaf(other.clone())?;
                let out = t.add(x, o)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("sub", &mut |rng| {
        let shape = [rng.random_range(1..4usize), rng.random_range(1..5usize)];
        let other = rand_tensor(rng, &shape, -2.0, 2.0);
        let x0 = rand_tensor(rng, &shape, -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let o = t.leaf(other.clone())?;
                let out = t.sub(o, x)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("add_row", &mut |rng| {
        let (rows, cols) = (rng.random_range(1..5usize), rng.random_range(1..5usize));
        let x_mat = rand_tensor(rng, &[rows, cols], -2.0, 2.0);
        let row0 = rand_tensor(rng, &[cols], -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        let er = grad_check(
            |t, x| {
                let m = t.leaf(x_mat.clone())?;
                let out = t.add_row(m, x)?;
                scalarize(t, out, &mut r.clone())
            },
            &row0,
            FD_EPS,
        )?;
        let row_fixed = row0;
        let x0 = rand_tensor(rng, &[rows, cols], -2.0, 2.0);
        let r2 = ChaCha8Rng::clone(rng);
        let ex = grad_check(
            |t, x| {
                let rw = t.leaf(row_fixed.clone())?;
                let out = t.add_row(x, rw)?;
                scalarize(t, out, &mut r2.clone())
            },
            &x0,
            FD_EPS,
        )?;
        Ok(er.max(ex))
    })?;

    run("mul", &mut |rng| {
        let shape = [rng.random_range(1..4usize), rng.random_range(1..5usize)];
        let other = rand_tensor(rng, &shape, -2.0, 2.0);
        let x0 = rand_tensor(rng, &shape, -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        let e1 = grad_check(
            |t, x| {
                let o = t.leaf(other.clone())?;
                let out = t.mul(x, o)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )?;
        // Scalar broadcast: gradient w.r.t. the scalar side.
        let tensor_side = rand_tensor(rng, &shape, -2.0, 2.0);
        let s0 = rand_tensor(rng, &[1], -2.0, 2.0);
        let r2 = ChaCha8Rng::clone(rng);
        let e2 = grad_check(
            |t, x| {
                let o = t.leaf(tensor_side.clone())?;
                let out = t.mul(x, o)?;
                scalarize(t, out, &mut r2.clone())
            },
            &s0,
            FD_EPS,
        )?;
        Ok(e1.max(e2))
    })?;

    run("mul_row", &mut |rng| {
        let (rows, cols) = (rng.random_range(1..5usize), rng.random_range(1..5usize));
        let x_mat = rand_tensor(rng, &[rows, cols], -2.0, 2.0);
        let row0 = rand_tensor(rng, &[cols], -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        let er = grad_check(
            |t, x| {
                let m = t.leaf(x_mat.clone())?;
                let out = t.mul_row(m, x)?;
                scalarize(t, out, &mut r.clone())
            },
            &row0,
            FD_EPS,
        )?;
        let row_fixed = row0;
        let x0 = rand_tensor(rng, &[rows, cols], -2.0, 2.0);
        let r2 = ChaCha8Rng::clone(rng);
        let ex = grad_check(
            |t, x| {
                let rw = t.leaf(row_fixed.clone())?;
                let out = t.mul_row(x, rw)?;
                scalarize(t, out, &mut r2.clone())
            },
            &x0,
            FD_EPS,
        )?;
        Ok(er.max(ex))
    })?;

    run("relu", &mut |rng| {
        let shape = [rng.random_range(1..4usize), rng.random_range(1..6usize)];
        let x0 = rand_tensor_off_kink(rng, &shape);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let out = t.relu(x)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("tanh", &mut |rng| {
        let shape = [rng.random_range(1..4usize), rng.random_range(1..6usize)];
        let x0 = rand_tensor(rng, &shape, -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let out = t.tanh(x)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("sigmoid", &mut |rng| {
        let shape = [rng.random_range(1..4usize), rng.random_range(1..6usize)];
        let x0 = rand_tensor(rng, &shape, -3.0, 3.0);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let out = t.sigmoid(x)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("ln", &mut |rng| {
        let shape = [rng.random_range(1..4usize), rng.random_range(1..5usize)];
        let x0 = rand_tensor(rng, &shape, 0.2, 3.0);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let out = t.ln(x)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("affine", &mut |rng| {
        let shape = [rng.random_range(1..4usize), rng.random_range(1..5usize)];
        let x0 = rand_tensor(rng, &shape, -2.0, 2.0);
        let (a, b) = (uniform(rng, -2.0, 2.0), uniform(rng, -1.0, 1.0));
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let out = t.affine(x, a, b)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("softmax", &mut |rng| {
        let shape = [rng.random_range(1..4usize), rng.random_range(2..6usize)];
        let x0 = rand_tensor(rng, &shape, -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let out = t.softmax(x)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("log_softmax", &mut |rng| {
        let shape = [rng.random_range(1..4usize), rng.random_range(2..6usize)];
        let x0 = rand_tensor(rng, &shape, -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let out = t.log_softmax(x)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("layer_norm", &mut |rng| {
        // Rows get a solid spread so the variance stays well conditioned
        // under the finite-difference step.
        let shape = [rng.random_range(1..4usize), rng.random_range(3..7usize)];
        let x0 = rand_tensor(rng, &shape, -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let out = t.layer_norm(x)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("conv1d", &mut |rng| {
        let (c_in, c_out) = (rng.random_range(1..3usize), rng.random_range(1..3usize));
        let k = rng.random_range(1..4usize);
        let stride = rng.random_range(1..3usize);
        let t_in = k + rng.random_range(2..8usize);
        let x0 = rand_tensor(rng, &[t_in, c_in], -2.0, 2.0);
        let k0 = rand_tensor(rng, &[c_out, c_in, k], -2.0, 2.0);
        let k_fixed = k0.clone();
        let r = ChaCha8Rng::clone(rng);
        let ex = grad_check(
            |t, x| {
                let kid = t.leaf(k_fixed.clone())?;
                let out = t.conv1d(x, kid, stride, false)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )?;
        let x_fixed = x0;
        let r2 = ChaCha8Rng::clone(rng);
        let ek = grad_check(
            |t, x| {
                let xid = t.leaf(x_fixed.clone())?;
                let out = t.conv1d(xid, x, stride, false)?;
                scalarize(t, out, &mut r2.clone())
            },
            &k0,
            FD_EPS,
        )?;
        // Same-padded variant.
        let k_odd = 1 + 2 * rng.random_range(0..2usize);
        let xs0 = rand_tensor(rng, &[t_in, c_in], -2.0, 2.0);
        let ks = rand_tensor(rng, &[c_out, c_in, k_odd], -2.0, 2.0);
        let r3 = ChaCha8Rng::clone(rng);
        let es = grad_check(
            |t, x| {
                let kid = t.leaf(ks.clone())?;
                let out = t.conv1d(x, kid, 1, true)?;
                scalarize(t, out, &mut r3.clone())
            },
            &xs0,
            FD_EPS,
        )?;
        Ok(ex.max(ek).max(es))
    })?;

    run("conv1d_transposed", &mut |rng| {
        let (c_in, c_out) = (rng.random_range(1..3usize), rng.random_range(1..3usize));
        let k = rng.random_range(1..4usize);
        let stride = rng.random_range(1..3usize);
        let t_in = rng.random_range(2..7usize);
        let x0 = rand_tensor(rng, &[t_in, c_in], -2.0, 2.0);
        let k0 = rand_tensor(rng, &[c_in, c_out, k], -2.0, 2.0);
        let k_fixed = k0.clone();
        let r = ChaCha8Rng::clone(rng);
        let ex = grad_check(
            |t, x| {
                let kid = t.leaf(k_fixed.clone())?;
                let out = t.conv1d_transposed(x, kid, stride)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )?;
        let x_fixed = x0;
        let r2 = ChaCha8Rng::clone(rng);
        let ek = grad_check(
            |t, x| {
                let xid = t.leaf(x_fixed.clone())?;
                let out = t.conv1d_transposed(xid, x, stride)?;
                scalarize(t, out, &mut r2.clone())
            },
            &k0,
            FD_EPS,
        )?;
        Ok(ex.max(ek))
    })?;

    run("conv1d_depthwise", &mut |rng| {
        let c = rng.random_range(1..4usize);
        let k = 1 + 2 * rng.random_range(0..3usize);
        let t_in = rng.random_range(3..9usize);
        let x0 = rand_tensor(rng, &[t_in, c], -2.0, 2.0);
        let k0 = rand_tensor(rng, &[c, k], -2.0, 2.0);
        let k_fixed = k0.clone();
        let r = ChaCha8Rng::clone(rng);
        let ex = grad_check(
            |t, x| {
                let kid = t.leaf(k_fixed.clone())?;
                let out = t.conv1d_depthwise(x, kid)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )?;
        let x_fixed = x0;
        let r2 = ChaCha8Rng::clone(rng);
        let ek = grad_check(
            |t, x| {
                let xid = t.leaf(x_fixed.clone())?;
                let out = t.conv1d_depthwise(xid, x)?;
                scalarize(t, out, &mut r2.clone())
            },
            &k0,
            FD_EPS,
        )?;
        Ok(ex.max(ek))
    })?;

    run("embedding_lookup", &mut |rng| {
        let (n, d) = (rng.random_range(2..6usize), rng.random_range(1..5usize));
        let idx = rng.random_range(0..n);
        let t0 = rand_tensor(rng, &[n, d], -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let out = t.embedding_lookup(x, idx)?;
                scalarize(t, out, &mut r.clone())
            },
            &t0,
            FD_EPS,
        )
    })?;

    run("concat", &mut |rng| {
        let axis = rng.random_range(0..2usize);
        let (rows, cols) = (rng.random_range(1..4usize), rng.random_range(1..4usize));
        let other_rows = if axis == 0 { rng.random_range(1..4usize) } else { rows };
        let other_cols = if axis == 1 { rng.random_range(1..4usize) } else { cols };
        let other = rand_tensor(rng, &[other_rows, other_cols], -2.0, 2.0);
        let x0 = rand_tensor(rng, &[rows, cols], -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let o = t.leaf(other.clone())?;
                let out = t.concat(&[x, o], axis)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("slice", &mut |rng| {
        let (rows, cols) = (rng.random_range(2..6usize), rng.random_range(2..6usize));
        let axis = rng.random_range(0..2usize);
        let extent = if axis == 0 { rows } else { cols };
        let start = rng.random_range(0..extent);
        let len = rng.random_range(1..=extent - start);
        let x0 = rand_tensor(rng, &[rows, cols], -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let out = t.slice(x, axis, start, len)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("reduce_sum", &mut |rng| {
        let shape = [rng.random_range(1..5usize), rng.random_range(1..5usize)];
        let x0 = rand_tensor(rng, &shape, -2.0, 2.0);
        let e1 = grad_check(|t, x| t.sum_all(x), &x0, FD_EPS)?;
        let r = ChaCha8Rng::clone(rng);
        let e2 = grad_check(
            |t, x| {
                let out = t.sum_rows(x)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )?;
        Ok(e1.max(e2))
    })?;

    run("reduce_mean", &mut |rng| {
        let shape = [rng.random_range(1..5usize), rng.random_range(1..5usize)];
        let x0 = rand_tensor(rng, &shape, -2.0, 2.0);
        let e1 = grad_check(|t, x| t.mean_all(x), &x0, FD_EPS)?;
        let r = ChaCha8Rng::clone(rng);
        let e2 = grad_check(
            |t, x| {
                let out = t.mean_rows(x)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )?;
        Ok(e1.max(e2))
    })?;

    run("reverse_rows", &mut |rng| {
        let shape = [rng.random_range(1..5usize), rng.random_range(1..5usize)];
        let x0 = rand_tensor(rng, &shape, -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let out = t.reverse_rows(x)?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("reshape", &mut |rng| {
        let (rows, cols) = (rng.random_range(1..5usize), rng.random_range(1..5usize));
        let x0 = rand_tensor(rng, &[rows, cols], -2.0, 2.0);
        let r = ChaCha8Rng::clone(rng);
        grad_check(
            |t, x| {
                let out = t.reshape(x, vec![rows * cols])?;
                scalarize(t, out, &mut r.clone())
            },
            &x0,
            FD_EPS,
        )
    })?;

    run("ctc_loss", &mut |rng| {
        // Gradients flow through log-softmax into raw scores, matching how
        // the loss is used in training.
        let vocab = rng.random_range(2..5usize);
        let t_frames = rng.random_range(3..7usize);
        let target_len = rng.random_range(1..=t_frames.min(3));
        let targets: Vec<usize> = (0..target_len).map(|_| rng.random_range(0..vocab)).collect();
        let x0 = rand_tensor(rng, &[t_frames, vocab + 1], -2.0, 2.0);
        let targets_fixed = targets.clone();
        grad_check(
            |t, x| {
                let lp = t.log_softmax(x)?;
                t.ctc_loss(lp, &targets_fixed)
            },
            &x0,
            FD_EPS,
        )
    })?;

    Ok(results)
}

fn hash_op(op: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in op.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_gradient_matches_analytic_quadratic() {
        // f(v) = Σ v_i², df/dv_i = 2 v_i
        let mut v = vec![0.5, -1.25, 2.0];
        let g = fd_gradient(&mut v, 1e-5, |vals| Ok(vals.iter().map(|x| x * x).sum())).unwrap();
        for (gi, vi) in g.iter().zip(&v) {
            assert!((gi - 2.0 * vi).abs() < 1e-8);
        }
        assert_eq!(v, vec![0.5, -1.25, 2.0], "buffer restored");
    }

    #[test]
    fn catalog_smoke_passes_threshold() {
        // Three cases per op as a fast regression net; the acceptance suite
        // runs the full hundred.
        let entries = grad_check_catalog(3, 20240817).unwrap();
        assert!(entries.len() >= 20, "catalog should cover every primitive");
        for e in &entries {
            assert!(
                e.max_rel_err < 1e-4,
                "{} gradient mismatch: {}",
                e.op,
                e.max_rel_err
            );
        }
    }
}
