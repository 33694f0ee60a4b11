//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation whose result depends on a gradient-
//! requiring leaf. [`Tape::backward`] replays the record once in reverse and
//! returns per-leaf gradients. Tapes are cheap, single-use, and confined to
//! one thread; model parameters live outside the tape as plain [`Tensor`]s
//! and are registered as named leaves at the start of each forward pass.
//!
//! Every op validates shapes up front and verifies its output is finite, so
//! NaN/Inf surface at the op that produced them rather than three modules
//! later.

pub mod check;
pub(crate) mod kernels;

pub use check::{fd_gradient, grad_check, grad_check_catalog, CatalogEntry};

use crate::error::{Error, Result};
use crate::objectives::ctc;
use crate::params::Param;
use crate::tensor::{fmt_shape, Tensor};

/// Handle to a value on a tape. Only meaningful for the tape that made it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul { a: TensorId, b: TensorId },
    MatmulNt { a: TensorId, b: TensorId },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    AddRow { x: TensorId, row: TensorId },
    Mul { a: TensorId, b: TensorId },
    MulRow { x: TensorId, row: TensorId },
    Relu { x: TensorId },
    Tanh { x: TensorId },
    Sigmoid { x: TensorId },
    Ln { x: TensorId },
    Softmax { x: TensorId },
    LogSoftmax { x: TensorId },
    LayerNorm { x: TensorId },
    Affine { x: TensorId, mul: f64 },
    Conv1d { x: TensorId, kernel: TensorId, stride: usize, same_pad: bool },
    ConvTranspose1d { x: TensorId, kernel: TensorId, stride: usize },
    ConvDepthwise1d { x: TensorId, kernel: TensorId },
    EmbeddingLookup { table: TensorId, index: usize },
    Concat { parts: Vec<TensorId>, axis: usize },
    Slice { x: TensorId, axis: usize, start: usize, len: usize },
    SumAll { x: TensorId },
    MeanAll { x: TensorId },
    SumRows { x: TensorId },
    MeanRows { x: TensorId },
    ReverseRows { x: TensorId },
    Reshape { x: TensorId },
    CtcLoss { log_probs: TensorId, targets: Vec<usize> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by one backward pass. Leaves that the loss does not
/// depend on are absent and read back as zero.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(String, TensorId)>,
}

impl Gradients {
    pub fn get(&self, id: TensorId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `id`, materializing zeros of `shape` when absent.
    pub fn get_or_zeros(&self, id: TensorId, shape: &[usize]) -> Tensor {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }

    /// Gradient of the named parameter registered during the forward pass.
    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, id)| self.get(*id))
    }
}

/// Reverse-mode tape. One forward construction, at most one backward.
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, TensorId)>,
    freeze_params: bool,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
            freeze_params: false,
            backward_done: false,
        }
    }

    /// When frozen, later [`Tape::param`] registrations become constants.
    /// Used to optimize an input (e.g. a speaker embedding) while every model
    /// parameter stays fixed.
    pub fn freeze_params(&mut self, frozen: bool) {
        self.freeze_params = frozen;
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> TensorId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn check_finite(&self, op: &'static str, t: &Tensor) -> Result<()> {
        if t.all_finite() {
            Ok(())
        } else {
            Err(Error::non_finite(format!("output of {op}")))
        }
    }

    /// Constant input; gradients never flow into it.
    pub fn leaf(&mut self, value: Tensor) -> Result<TensorId> {
        self.check_finite("leaf", &value)?;
        Ok(self.push(value, Op::Leaf, false))
    }

    /// Gradient-requiring input.
    pub fn leaf_grad(&mut self, value: Tensor) -> Result<TensorId> {
        self.check_finite("leaf", &value)?;
        Ok(self.push(value, Op::Leaf, true))
    }

    /// Register a named model parameter as a leaf. Repeated registration of
    /// the same name returns the original id, so shared parameters accumulate
    /// gradients correctly. Honors [`Tape::freeze_params`].
    pub fn param(&mut self, p: &Param) -> Result<TensorId> {
        if let Some((_, id)) = self.params.iter().find(|(n, _)| n == p.name()) {
            return Ok(*id);
        }
        let id = if self.freeze_params {
            self.leaf(p.value().clone())?
        } else {
            self.leaf_grad(p.value().clone())?
        };
        self.params.push((p.name().to_string(), id));
        Ok(id)
    }

    fn needs(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    // ── Binary linear algebra ───────────────────────────────────────────────

    /// Matrix product. Accepts 2-D×2-D, 1-D×2-D (row vector), 2-D×1-D
    /// (column vector) and 1-D×1-D (dot product).
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k1) = (av.rows(), av.cols());
        let (k2, n) = match bv.rank() {
            1 => (bv.numel(), 1),
            2 => (bv.shape()[0], bv.shape()[1]),
            _ => {
                return Err(Error::shape(
                    "matmul",
                    format!("rhs must be rank 1 or 2, got {}", fmt_shape(bv.shape())),
                ))
            }
        };
        if av.rank() > 2 {
            return Err(Error::shape(
                "matmul",
                format!("lhs must be rank 1 or 2, got {}", fmt_shape(av.shape())),
            ));
        }
        if k1 != k2 {
            return Err(Error::shape(
                "matmul",
                format!(
                    "inner dimensions differ: lhs {} vs rhs {}",
                    fmt_shape(av.shape()),
                    fmt_shape(bv.shape())
                ),
            ));
        }
        let mut out = vec![0.0; m * n];
        kernels::mm_acc(av.data(), bv.data(), m, k1, n, &mut out);
        let out_shape = match (av.rank(), bv.rank()) {
            (1, 1) => vec![1],
            (1, 2) => vec![n],
            (2, 1) => vec![m],
            _ => vec![m, n],
        };
        let t = Tensor::new(out_shape, out)?;
        self.check_finite("matmul", &t)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(t, Op::Matmul { a, b }, ng))
    }

    /// `a · bᵀ` for 2-D `a` [m,k] and 2-D `b` [n,k].
    pub fn matmul_nt(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[1] {
            return Err(Error::shape(
                "matmul_nt",
                format!(
                    "need [m,k] and [n,k], got {} and {}",
                    fmt_shape(av.shape()),
                    fmt_shape(bv.shape())
                ),
            ));
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[0]);
        let mut out = vec![0.0; m * n];
        kernels::mm_nt_acc(av.data(), bv.data(), m, k, n, &mut out);
        let t = Tensor::new(vec![m, n], out)?;
        self.check_finite("matmul_nt", &t)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(t, Op::MatmulNt { a, b }, ng))
    }

    fn same_shape(&self, op: &'static str, a: TensorId, b: TensorId) -> Result<()> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                op,
                format!("{} vs {}", fmt_shape(av.shape()), fmt_shape(bv.shape())),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape("add", a, b)?;
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        self.check_finite("add", &t)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(t, Op::Add { a, b }, ng))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape("sub", a, b)?;
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        self.check_finite("sub", &t)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(t, Op::Sub { a, b }, ng))
    }

    /// Add a 1-D `row` to every row of 2-D `x` (bias broadcast).
    pub fn add_row(&mut self, x: TensorId, row: TensorId) -> Result<TensorId> {
        let (xv, rv) = (&self.nodes[x.0].value, &self.nodes[row.0].value);
        if rv.rank() != 1 || xv.cols() != rv.numel() {
            return Err(Error::shape(
                "add_row",
                format!("{} + row {}", fmt_shape(xv.shape()), fmt_shape(rv.shape())),
            ));
        }
        let cols = xv.cols();
        let mut data = xv.data().to_vec();
        for chunk in data.chunks_mut(cols) {
            for (d, r) in chunk.iter_mut().zip(rv.data()) {
                *d += r;
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        self.check_finite("add_row", &t)?;
        let ng = self.needs(&[x, row]);
        Ok(self.push(t, Op::AddRow { x, row }, ng))
    }

    /// Elementwise product. Shapes must match, or one operand may be a
    /// single-element tensor which then scales the other.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let ok = av.shape() == bv.shape() || av.is_scalar() || bv.is_scalar();
        if !ok {
            return Err(Error::shape(
                "mul",
                format!("{} vs {}", fmt_shape(av.shape()), fmt_shape(bv.shape())),
            ));
        }
        let t = if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
            Tensor::new(av.shape().to_vec(), data)?
        } else if av.is_scalar() {
            let s = av.data()[0];
            Tensor::new(bv.shape().to_vec(), bv.data().iter().map(|y| s * y).collect())?
        } else {
            let s = bv.data()[0];
            Tensor::new(av.shape().to_vec(), av.data().iter().map(|x| s * x).collect())?
        };
        self.check_finite("mul", &t)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(t, Op::Mul { a, b }, ng))
    }

    /// Multiply every row of 2-D `x` by a 1-D `row` (the speaker-conditioning
    /// primitive). Gradient w.r.t. `row` is the sum over frames of
    /// `x_t ⊙ upstream_t`.
    pub fn mul_row(&mut self, x: TensorId, row: TensorId) -> Result<TensorId> {
        let (xv, rv) = (&self.nodes[x.0].value, &self.nodes[row.0].value);
        if rv.rank() != 1 || xv.cols() != rv.numel() {
            return Err(Error::shape(
                "mul_row",
                format!("{} x row {}", fmt_shape(xv.shape()), fmt_shape(rv.shape())),
            ));
        }
        let cols = xv.cols();
        let mut data = xv.data().to_vec();
        for chunk in data.chunks_mut(cols) {
            for (d, r) in chunk.iter_mut().zip(rv.data()) {
                *d *= r;
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        self.check_finite("mul_row", &t)?;
        let ng = self.needs(&[x, row]);
        Ok(self.push(t, Op::MulRow { x, row }, ng))
    }

    // ── Elementwise nonlinearities ──────────────────────────────────────────

    fn unary(
        &mut self,
        name: &'static str,
        x: TensorId,
        f: impl Fn(f64) -> f64,
        op: impl Fn(TensorId) -> Op,
    ) -> Result<TensorId> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        self.check_finite(name, &t)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, op(x), ng))
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary("relu", x, |v| v.max(0.0), |x| Op::Relu { x })
    }

    pub fn tanh(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary("tanh", x, f64::tanh, |x| Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary("sigmoid", x, |v| 1.0 / (1.0 + (-v).exp()), |x| Op::Sigmoid { x })
    }

    /// Natural logarithm; rejects non-positive inputs rather than emitting
    /// -inf/NaN.
    pub fn ln(&mut self, x: TensorId) -> Result<TensorId> {
        let xv = &self.nodes[x.0].value;
        if xv.data().iter().any(|&v| v <= 0.0) {
            return Err(Error::Numerical(
                "ln: input must be strictly positive".to_string(),
            ));
        }
        self.unary("ln", x, f64::ln, |x| Op::Ln { x })
    }

    /// `mul * x + add` with compile-time constants (scaling, offsets).
    pub fn affine(&mut self, x: TensorId, mul: f64, add: f64) -> Result<TensorId> {
        self.unary("affine", x, |v| mul * v + add, |x| Op::Affine { x, mul })
    }

    pub fn scale(&mut self, x: TensorId, c: f64) -> Result<TensorId> {
        self.affine(x, c, 0.0)
    }

    // ── Row-wise normalizations ─────────────────────────────────────────────

    /// Softmax over the last axis (each row of a 2-D tensor, or the whole of
    /// a 1-D tensor).
    pub fn softmax(&mut self, x: TensorId) -> Result<TensorId> {
        let xv = &self.nodes[x.0].value;
        let cols = xv.cols();
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(cols) {
            kernels::softmax_row(row);
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        self.check_finite("softmax", &t)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::Softmax { x }, ng))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: TensorId) -> Result<TensorId> {
        let xv = &self.nodes[x.0].value;
        let cols = xv.cols();
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(cols) {
            kernels::log_softmax_row(row);
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        self.check_finite("log_softmax", &t)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::LogSoftmax { x }, ng))
    }

    /// Per-row standardization to zero mean and unit variance (no affine
    /// stage; compose with [`Tape::mul_row`]/[`Tape::add_row`] for one).
    pub fn layer_norm(&mut self, x: TensorId) -> Result<TensorId> {
        let xv = &self.nodes[x.0].value;
        let cols = xv.cols();
        if cols < 2 {
            return Err(Error::shape(
                "layer_norm",
                format!("needs at least 2 features per row, got {}", fmt_shape(xv.shape())),
            ));
        }
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(cols) {
            kernels::layer_norm_row(row);
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        self.check_finite("layer_norm", &t)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::LayerNorm { x }, ng))
    }

    // ── Convolutions ────────────────────────────────────────────────────────

    /// 1-D convolution over time. `x` is [T, C_in], `kernel` is
    /// [C_out, C_in, K]. `same_pad` zero-pads to preserve T (stride must be 1
    /// and K odd); otherwise the convolution is "valid" with the given stride.
    pub fn conv1d(
        &mut self,
        x: TensorId,
        kernel: TensorId,
        stride: usize,
        same_pad: bool,
    ) -> Result<TensorId> {
        let (xv, kv) = (&self.nodes[x.0].value, &self.nodes[kernel.0].value);
        if xv.rank() != 2 || kv.rank() != 3 {
            return Err(Error::shape(
                "conv1d",
                format!(
                    "need input [T,C_in] and kernel [C_out,C_in,K], got {} and {}",
                    fmt_shape(xv.shape()),
                    fmt_shape(kv.shape())
                ),
            ));
        }
        let (t_in, c_in) = (xv.shape()[0], xv.shape()[1]);
        let (c_out, kc_in, k) = (kv.shape()[0], kv.shape()[1], kv.shape()[2]);
        if c_in != kc_in {
            return Err(Error::shape(
                "conv1d",
                format!("input has {c_in} channels but kernel expects {kc_in}"),
            ));
        }
        if stride == 0 {
            return Err(Error::contract("conv1d: stride must be at least 1"));
        }
        if same_pad && (stride != 1 || k % 2 == 0) {
            return Err(Error::contract(
                "conv1d: same padding requires stride 1 and odd kernel length",
            ));
        }
        if !same_pad && t_in < k {
            return Err(Error::shape(
                "conv1d",
                format!("input length {t_in} shorter than kernel {k}"),
            ));
        }
        let t_out = if same_pad { t_in } else { (t_in - k) / stride + 1 };
        let mut out = vec![0.0; t_out * c_out];
        kernels::conv1d_fwd(
            xv.data(),
            kv.data(),
            t_in,
            c_in,
            c_out,
            k,
            stride,
            same_pad,
            &mut out,
        );
        let t = Tensor::new(vec![t_out, c_out], out)?;
        self.check_finite("conv1d", &t)?;
        let ng = self.needs(&[x, kernel]);
        Ok(self.push(t, Op::Conv1d { x, kernel, stride, same_pad }, ng))
    }

    /// Transposed 1-D convolution (exact adjoint of the valid strided
    /// [`Tape::conv1d`]). `x` is [T, C_in], `kernel` is [C_in, C_out, K];
    /// output is [(T-1)*stride + K, C_out].
    pub fn conv1d_transposed(
        &mut self,
        x: TensorId,
        kernel: TensorId,
        stride: usize,
    ) -> Result<TensorId> {
        let (xv, kv) = (&self.nodes[x.0].value, &self.nodes[kernel.0].value);
        if xv.rank() != 2 || kv.rank() != 3 {
            return Err(Error::shape(
                "conv1d_transposed",
                format!(
                    "need input [T,C_in] and kernel [C_in,C_out,K], got {} and {}",
                    fmt_shape(xv.shape()),
                    fmt_shape(kv.shape())
                ),
            ));
        }
        let (t_in, c_in) = (xv.shape()[0], xv.shape()[1]);
        let (kc_in, c_out, k) = (kv.shape()[0], kv.shape()[1], kv.shape()[2]);
        if c_in != kc_in {
            return Err(Error::shape(
                "conv1d_transposed",
                format!("input has {c_in} channels but kernel expects {kc_in}"),
            ));
        }
        if stride == 0 {
            return Err(Error::contract("conv1d_transposed: stride must be at least 1"));
        }
        if t_in == 0 {
            return Err(Error::shape("conv1d_transposed", "empty input".to_string()));
        }
        let t_out = (t_in - 1) * stride + k;
        let mut out = vec![0.0; t_out * c_out];
        kernels::conv1d_transposed_fwd(
            xv.data(),
            kv.data(),
            t_in,
            c_in,
            c_out,
            k,
            stride,
            &mut out,
        );
        let t = Tensor::new(vec![t_out, c_out], out)?;
        self.check_finite("conv1d_transposed", &t)?;
        let ng = self.needs(&[x, kernel]);
        Ok(self.push(t, Op::ConvTranspose1d { x, kernel, stride }, ng))
    }

    /// Depthwise 1-D convolution with same padding: each channel of [T, C]
    /// is filtered by its own length-K kernel from [C, K]. K must be odd.
    pub fn conv1d_depthwise(&mut self, x: TensorId, kernel: TensorId) -> Result<TensorId> {
        let (xv, kv) = (&self.nodes[x.0].value, &self.nodes[kernel.0].value);
        if xv.rank() != 2 || kv.rank() != 2 || xv.shape()[1] != kv.shape()[0] {
            return Err(Error::shape(
                "conv1d_depthwise",
                format!(
                    "need input [T,C] and kernel [C,K], got {} and {}",
                    fmt_shape(xv.shape()),
                    fmt_shape(kv.shape())
                ),
            ));
        }
        let k = kv.shape()[1];
        if k % 2 == 0 {
            return Err(Error::contract("conv1d_depthwise: kernel length must be odd"));
        }
        let (t_in, c) = (xv.shape()[0], xv.shape()[1]);
        let mut out = vec![0.0; t_in * c];
        kernels::conv1d_depthwise_fwd(xv.data(), kv.data(), t_in, c, k, &mut out);
        let t = Tensor::new(vec![t_in, c], out)?;
        self.check_finite("conv1d_depthwise", &t)?;
        let ng = self.needs(&[x, kernel]);
        Ok(self.push(t, Op::ConvDepthwise1d { x, kernel }, ng))
    }

    // ── Structural ops ──────────────────────────────────────────────────────

    /// Row `index` of a 2-D `table` as a 1-D tensor; gradients scatter-add
    /// back into that row.
    pub fn embedding_lookup(&mut self, table: TensorId, index: usize) -> Result<TensorId> {
        let tv = &self.nodes[table.0].value;
        if tv.rank() != 2 {
            return Err(Error::shape(
                "embedding_lookup",
                format!("table must be 2-D, got {}", fmt_shape(tv.shape())),
            ));
        }
        if index >= tv.shape()[0] {
            return Err(Error::contract(format!(
                "embedding_lookup: row {index} out of range for table with {} rows",
                tv.shape()[0]
            )));
        }
        let t = Tensor::vector(tv.row(index).to_vec());
        let ng = self.needs(&[table]);
        Ok(self.push(t, Op::EmbeddingLookup { table, index }, ng))
    }

    /// Concatenate along `axis` (0 = stack rows, 1 = widen rows). 1-D parts
    /// concatenate along axis 0 into a longer vector.
    pub fn concat(&mut self, parts: &[TensorId], axis: usize) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::contract("concat: needs at least one part"));
        }
        if axis > 1 {
            return Err(Error::contract("concat: axis must be 0 or 1"));
        }
        let first = &self.nodes[parts[0].0].value;
        let rank = first.rank();
        let t = if rank == 1 && axis == 0 {
            let mut data = Vec::new();
            for p in parts {
                let v = &self.nodes[p.0].value;
                if v.rank() != 1 {
                    return Err(Error::shape("concat", "mixed ranks".to_string()));
                }
                data.extend_from_slice(v.data());
            }
            Tensor::vector(data)
        } else if rank == 2 && axis == 0 {
            let cols = first.shape()[1];
            let mut rows = 0;
            let mut data = Vec::new();
            for p in parts {
                let v = &self.nodes[p.0].value;
                if v.rank() != 2 || v.shape()[1] != cols {
                    return Err(Error::shape(
                        "concat",
                        format!("row stacking needs equal widths, got {}", fmt_shape(v.shape())),
                    ));
                }
                rows += v.shape()[0];
                data.extend_from_slice(v.data());
            }
            Tensor::new(vec![rows, cols], data)?
        } else if rank == 2 && axis == 1 {
            let rows = first.shape()[0];
            let widths: Vec<usize> = parts
                .iter()
                .map(|p| self.nodes[p.0].value.shape()[1])
                .collect();
            for p in parts {
                let v = &self.nodes[p.0].value;
                if v.rank() != 2 || v.shape()[0] != rows {
                    return Err(Error::shape(
                        "concat",
                        format!("column splicing needs equal row counts, got {}", fmt_shape(v.shape())),
                    ));
                }
            }
            let total: usize = widths.iter().sum();
            let mut data = vec![0.0; rows * total];
            let mut offset = 0;
            for (p, w) in parts.iter().zip(&widths) {
                let v = &self.nodes[p.0].value;
                for r in 0..rows {
                    data[r * total + offset..r * total + offset + w]
                        .copy_from_slice(v.row(r));
                }
                offset += w;
            }
            Tensor::new(vec![rows, total], data)?
        } else {
            return Err(Error::shape(
                "concat",
                format!("unsupported rank {rank} for axis {axis}"),
            ));
        };
        let ng = self.needs(parts);
        Ok(self.push(
            t,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            ng,
        ))
    }

    /// Contiguous range `[start, start+len)` along `axis`.
    pub fn slice(&mut self, x: TensorId, axis: usize, start: usize, len: usize) -> Result<TensorId> {
        let xv = &self.nodes[x.0].value;
        if len == 0 {
            return Err(Error::contract("slice: empty range"));
        }
        let t = match (xv.rank(), axis) {
            (1, 0) => {
                if start + len > xv.numel() {
                    return Err(Error::shape(
                        "slice",
                        format!("range {start}..{} outside {}", start + len, fmt_shape(xv.shape())),
                    ));
                }
                Tensor::vector(xv.data()[start..start + len].to_vec())
            }
            (2, 0) => {
                let (rows, cols) = (xv.shape()[0], xv.shape()[1]);
                if start + len > rows {
                    return Err(Error::shape(
                        "slice",
                        format!("rows {start}..{} outside {}", start + len, fmt_shape(xv.shape())),
                    ));
                }
                Tensor::new(
                    vec![len, cols],
                    xv.data()[start * cols..(start + len) * cols].to_vec(),
                )?
            }
            (2, 1) => {
                let (rows, cols) = (xv.shape()[0], xv.shape()[1]);
                if start + len > cols {
                    return Err(Error::shape(
                        "slice",
                        format!("cols {start}..{} outside {}", start + len, fmt_shape(xv.shape())),
                    ));
                }
                let mut data = vec![0.0; rows * len];
                for r in 0..rows {
                    data[r * len..(r + 1) * len]
                        .copy_from_slice(&xv.row(r)[start..start + len]);
                }
                Tensor::new(vec![rows, len], data)?
            }
            _ => {
                return Err(Error::shape(
                    "slice",
                    format!("axis {axis} invalid for {}", fmt_shape(xv.shape())),
                ))
            }
        };
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::Slice { x, axis, start, len }, ng))
    }

    pub fn sum_all(&mut self, x: TensorId) -> Result<TensorId> {
        let s: f64 = self.nodes[x.0].value.data().iter().sum();
        let t = Tensor::scalar(s);
        self.check_finite("sum_all", &t)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::SumAll { x }, ng))
    }

    pub fn mean_all(&mut self, x: TensorId) -> Result<TensorId> {
        let n = self.nodes[x.0].value.numel();
        let s: f64 = self.nodes[x.0].value.data().iter().sum();
        let t = Tensor::scalar(s / n as f64);
        self.check_finite("mean_all", &t)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::MeanAll { x }, ng))
    }

    /// Collapse the row axis of 2-D `x` by summation: [T, C] → [C].
    pub fn sum_rows(&mut self, x: TensorId) -> Result<TensorId> {
        let xv = &self.nodes[x.0].value;
        if xv.rank() != 2 {
            return Err(Error::shape(
                "sum_rows",
                format!("needs 2-D input, got {}", fmt_shape(xv.shape())),
            ));
        }
        let cols = xv.shape()[1];
        let mut out = vec![0.0; cols];
        for row in xv.data().chunks(cols) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let t = Tensor::vector(out);
        self.check_finite("sum_rows", &t)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::SumRows { x }, ng))
    }

    /// Collapse the row axis of 2-D `x` by averaging: [T, C] → [C].
    pub fn mean_rows(&mut self, x: TensorId) -> Result<TensorId> {
        let xv = &self.nodes[x.0].value;
        if xv.rank() != 2 {
            return Err(Error::shape(
                "mean_rows",
                format!("needs 2-D input, got {}", fmt_shape(xv.shape())),
            ));
        }
        let rows = xv.shape()[0] as f64;
        let cols = xv.shape()[1];
        let mut out = vec![0.0; cols];
        for row in xv.data().chunks(cols) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= rows;
        }
        let t = Tensor::vector(out);
        self.check_finite("mean_rows", &t)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::MeanRows { x }, ng))
    }

    /// Reverse row order (time reversal for the backward half of a
    /// bidirectional recurrence). 1-D tensors reverse elementwise.
    pub fn reverse_rows(&mut self, x: TensorId) -> Result<TensorId> {
        let xv = &self.nodes[x.0].value;
        let cols = xv.cols();
        let mut data = Vec::with_capacity(xv.numel());
        for row in xv.data().chunks(cols).rev() {
            data.extend_from_slice(row);
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::ReverseRows { x }, ng))
    }

    /// View with a different shape over the same elements.
    pub fn reshape(&mut self, x: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let t = self.nodes[x.0].value.reshaped(shape)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::Reshape { x }, ng))
    }

    // ── Sequence loss ───────────────────────────────────────────────────────

    /// Alignment-marginalized sequence loss over per-frame log-probabilities
    /// [T, V+1] (blank is the last class). Returns the scalar negative log
    /// probability of `targets` under the collapse rule; errors if `targets`
    /// cannot fit into T frames.
    pub fn ctc_loss(&mut self, log_probs: TensorId, targets: &[usize]) -> Result<TensorId> {
        let lp = &self.nodes[log_probs.0].value;
        let loss = ctc::ctc_loss_value(lp, targets)?;
        let t = Tensor::scalar(loss);
        self.check_finite("ctc_loss", &t)?;
        let ng = self.needs(&[log_probs]);
        Ok(self.push(
            t,
            Op::CtcLoss {
                log_probs,
                targets: targets.to_vec(),
            },
            ng,
        ))
    }

    // ── Backward ────────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar `loss`. Consumes the tape's single
    /// backward budget; a second call is a contract error.
    pub fn backward(&mut self, loss: TensorId) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::contract(
                "backward: tape already consumed; build a fresh tape per backward pass",
            ));
        }
        self.backward_done = true;
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {}", fmt_shape(lv.shape())),
            ));
        }
        let mut acc: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].needs_grad {
            acc[loss.0] = Some(Tensor::scalar(1.0));
        }
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(g) = acc[id].take() else { continue };
            self.backprop_node(id, &g, &mut acc)?;
            acc[id] = Some(g);
        }
        for (i, g) in acc.iter().enumerate() {
            if let Some(t) = g {
                if !t.all_finite() {
                    return Err(Error::non_finite(format!("gradient of node {i}")));
                }
            }
        }
        Ok(Gradients {
            grads: acc,
            params: self.params.clone(),
        })
    }

    fn grad_buf<'a>(
        acc: &'a mut [Option<Tensor>],
        id: TensorId,
        shape: &[usize],
    ) -> &'a mut Tensor {
        let slot = &mut acc[id.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(shape));
        }
        slot.as_mut().unwrap()
    }

    fn backprop_node(&self, id: usize, g: &Tensor, acc: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[id];
        let needs = |t: &TensorId| self.nodes[t.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k) = (av.rows(), av.cols());
                let n = if bv.rank() == 1 { 1 } else { bv.shape()[1] };
                if needs(a) {
                    let da = Self::grad_buf(acc, *a, av.shape());
                    kernels::mm_nt_acc(g.data(), bv.data(), m, n, k, da.data_mut());
                }
                if needs(b) {
                    let db = Self::grad_buf(acc, *b, bv.shape());
                    kernels::mm_tn_acc(av.data(), g.data(), m, k, n, db.data_mut());
                }
            }
            Op::MatmulNt { a, b } => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[0]);
                if needs(a) {
                    let da = Self::grad_buf(acc, *a, av.shape());
                    kernels::mm_acc(g.data(), bv.data(), m, n, k, da.data_mut());
                }
                if needs(b) {
                    let db = Self::grad_buf(acc, *b, bv.shape());
                    kernels::mm_tn_acc(g.data(), av.data(), m, n, k, db.data_mut());
                }
            }
            Op::Add { a, b } => {
                for t in [a, b] {
                    if needs(t) {
                        let dt = Self::grad_buf(acc, *t, self.nodes[t.0].value.shape());
                        for (d, gv) in dt.data_mut().iter_mut().zip(g.data()) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Sub { a, b } => {
                if needs(a) {
                    let da = Self::grad_buf(acc, *a, self.nodes[a.0].value.shape());
                    for (d, gv) in da.data_mut().iter_mut().zip(g.data()) {
                        *d += gv;
                    }
                }
                if needs(b) {
                    let db = Self::grad_buf(acc, *b, self.nodes[b.0].value.shape());
                    for (d, gv) in db.data_mut().iter_mut().zip(g.data()) {
                        *d -= gv;
                    }
                }
            }
            Op::AddRow { x, row } => {
                let cols = self.nodes[row.0].value.numel();
                if needs(x) {
                    let dx = Self::grad_buf(acc, *x, self.nodes[x.0].value.shape());
                    for (d, gv) in dx.data_mut().iter_mut().zip(g.data()) {
                        *d += gv;
                    }
                }
                if needs(row) {
                    let dr = Self::grad_buf(acc, *row, self.nodes[row.0].value.shape());
                    for chunk in g.data().chunks(cols) {
                        for (d, gv) in dr.data_mut().iter_mut().zip(chunk) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if av.shape() == bv.shape() {
                    if needs(a) {
                        let da = Self::grad_buf(acc, *a, av.shape());
                        for ((d, gv), o) in da.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                            *d += gv * o;
                        }
                    }
                    if needs(b) {
                        let db = Self::grad_buf(acc, *b, bv.shape());
                        for ((d, gv), o) in db.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                            *d += gv * o;
                        }
                    }
                } else {
                    // One side is a scalar multiplier.
                    let (s_id, t_id, sv, tv) = if av.is_scalar() {
                        (a, b, av, bv)
                    } else {
                        (b, a, bv, av)
                    };
                    if needs(s_id) {
                        let contrib: f64 =
                            g.data().iter().zip(tv.data()).map(|(gv, o)| gv * o).sum();
                        let ds = Self::grad_buf(acc, *s_id, sv.shape());
                        ds.data_mut()[0] += contrib;
                    }
                    if needs(t_id) {
                        let s = sv.data()[0];
                        let dt = Self::grad_buf(acc, *t_id, tv.shape());
                        for (d, gv) in dt.data_mut().iter_mut().zip(g.data()) {
                            *d += s * gv;
                        }
                    }
                }
            }
            Op::MulRow { x, row } => {
                let (xv, rv) = (&self.nodes[x.0].value, &self.nodes[row.0].value);
                let cols = rv.numel();
                if needs(x) {
                    let dx = Self::grad_buf(acc, *x, xv.shape());
                    for (dchunk, gchunk) in
                        dx.data_mut().chunks_mut(cols).zip(g.data().chunks(cols))
                    {
                        for ((d, gv), r) in dchunk.iter_mut().zip(gchunk).zip(rv.data()) {
                            *d += gv * r;
                        }
                    }
                }
                if needs(row) {
                    let dr = Self::grad_buf(acc, *row, rv.shape());
                    for (gchunk, xchunk) in g.data().chunks(cols).zip(xv.data().chunks(cols)) {
                        for ((d, gv), xvv) in dr.data_mut().iter_mut().zip(gchunk).zip(xchunk) {
                            *d += gv * xvv;
                        }
                    }
                }
            }
            Op::Relu { x } => {
                if needs(x) {
                    let xv = &self.nodes[x.0].value;
                    let dx = Self::grad_buf(acc, *x, xv.shape());
                    for ((d, gv), xvv) in dx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        if *xvv > 0.0 {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Tanh { x } => {
                if needs(x) {
                    let yv = &node.value;
                    let dx = Self::grad_buf(acc, *x, yv.shape());
                    for ((d, gv), y) in dx.data_mut().iter_mut().zip(g.data()).zip(yv.data()) {
                        *d += gv * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid { x } => {
                if needs(x) {
                    let yv = &node.value;
                    let dx = Self::grad_buf(acc, *x, yv.shape());
                    for ((d, gv), y) in dx.data_mut().iter_mut().zip(g.data()).zip(yv.data()) {
                        *d += gv * y * (1.0 - y);
                    }
                }
            }
            Op::Ln { x } => {
                if needs(x) {
                    let xv = &self.nodes[x.0].value;
                    let dx = Self::grad_buf(acc, *x, xv.shape());
                    for ((d, gv), xvv) in dx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        *d += gv / xvv;
                    }
                }
            }
            Op::Affine { x, mul, .. } => {
                if needs(x) {
                    let dx = Self::grad_buf(acc, *x, self.nodes[x.0].value.shape());
                    for (d, gv) in dx.data_mut().iter_mut().zip(g.data()) {
                        *d += mul * gv;
                    }
                }
            }
            Op::Softmax { x } => {
                if needs(x) {
                    let yv = &node.value;
                    let cols = yv.cols();
                    let dx = Self::grad_buf(acc, *x, yv.shape());
                    for ((dchunk, gchunk), ychunk) in dx
                        .data_mut()
                        .chunks_mut(cols)
                        .zip(g.data().chunks(cols))
                        .zip(yv.data().chunks(cols))
                    {
                        let dot: f64 = gchunk.iter().zip(ychunk).map(|(gv, y)| gv * y).sum();
                        for ((d, gv), y) in dchunk.iter_mut().zip(gchunk).zip(ychunk) {
                            *d += y * (gv - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax { x } => {
                if needs(x) {
                    let yv = &node.value;
                    let cols = yv.cols();
                    let dx = Self::grad_buf(acc, *x, yv.shape());
                    for ((dchunk, gchunk), ychunk) in dx
                        .data_mut()
                        .chunks_mut(cols)
                        .zip(g.data().chunks(cols))
                        .zip(yv.data().chunks(cols))
                    {
                        let gsum: f64 = gchunk.iter().sum();
                        for ((d, gv), y) in dchunk.iter_mut().zip(gchunk).zip(ychunk) {
                            *d += gv - y.exp() * gsum;
                        }
                    }
                }
            }
            Op::LayerNorm { x } => {
                if needs(x) {
                    let xv = &self.nodes[x.0].value;
                    let yv = &node.value;
                    let cols = yv.cols();
                    let dx = Self::grad_buf(acc, *x, xv.shape());
                    for (((dchunk, gchunk), ychunk), xchunk) in dx
                        .data_mut()
                        .chunks_mut(cols)
                        .zip(g.data().chunks(cols))
                        .zip(yv.data().chunks(cols))
                        .zip(xv.data().chunks(cols))
                    {
                        kernels::layer_norm_bwd(xchunk, ychunk, gchunk, dchunk);
                    }
                }
            }
            Op::Conv1d { x, kernel, stride, same_pad } => {
                let (xv, kv) = (&self.nodes[x.0].value, &self.nodes[kernel.0].value);
                let (t_in, c_in) = (xv.shape()[0], xv.shape()[1]);
                let (c_out, _, k) = (kv.shape()[0], kv.shape()[1], kv.shape()[2]);
                if needs(x) {
                    let dx = Self::grad_buf(acc, *x, xv.shape());
                    kernels::conv1d_bwd_input(
                        g.data(),
                        kv.data(),
                        t_in,
                        c_in,
                        c_out,
                        k,
                        *stride,
                        *same_pad,
                        dx.data_mut(),
                    );
                }
                if needs(kernel) {
                    let dk = Self::grad_buf(acc, *kernel, kv.shape());
                    kernels::conv1d_bwd_kernel(
                        g.data(),
                        xv.data(),
                        t_in,
                        c_in,
                        c_out,
                        k,
                        *stride,
                        *same_pad,
                        dk.data_mut(),
                    );
                }
            }
            Op::ConvTranspose1d { x, kernel, stride } => {
                let (xv, kv) = (&self.nodes[x.0].value, &self.nodes[kernel.0].value);
                let (t_in, c_in) = (xv.shape()[0], xv.shape()[1]);
                let (_, c_out, k) = (kv.shape()[0], kv.shape()[1], kv.shape()[2]);
                if needs(x) {
                    let dx = Self::grad_buf(acc, *x, xv.shape());
                    kernels::conv1d_transposed_bwd_input(
                        g.data(),
                        kv.data(),
                        t_in,
                        c_in,
                        c_out,
                        k,
                        *stride,
                        dx.data_mut(),
                    );
                }
                if needs(kernel) {
                    let dk = Self::grad_buf(acc, *kernel, kv.shape());
                    kernels::conv1d_transposed_bwd_kernel(
                        g.data(),
                        xv.data(),
                        t_in,
                        c_in,
                        c_out,
                        k,
                        *stride,
                        dk.data_mut(),
                    );
                }
            }
            Op::ConvDepthwise1d { x, kernel } => {
                let (xv, kv) = (&self.nodes[x.0].value, &self.nodes[kernel.0].value);
                let (t_in, c) = (xv.shape()[0], xv.shape()[1]);
                let k = kv.shape()[1];
                if needs(x) {
                    let dx = Self::grad_buf(acc, *x, xv.shape());
                    kernels::conv1d_depthwise_bwd_input(g.data(), kv.data(), t_in, c, k, dx.data_mut());
                }
                if needs(kernel) {
                    let dk = Self::grad_buf(acc, *kernel, kv.shape());
                    kernels::conv1d_depthwise_bwd_kernel(g.data(), xv.data(), t_in, c, k, dk.data_mut());
                }
            }
            Op::EmbeddingLookup { table, index } => {
                if needs(table) {
                    let tv = &self.nodes[table.0].value;
                    let cols = tv.shape()[1];
                    let dt = Self::grad_buf(acc, *table, tv.shape());
                    let row = &mut dt.data_mut()[index * cols..(index + 1) * cols];
                    for (d, gv) in row.iter_mut().zip(g.data()) {
                        *d += gv;
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let rank = self.nodes[parts[0].0].value.rank();
                if rank == 1 || *axis == 0 {
                    let mut offset = 0;
                    for p in parts {
                        let pv = &self.nodes[p.0].value;
                        let n = pv.numel();
                        if needs(p) {
                            let dp = Self::grad_buf(acc, *p, pv.shape());
                            for (d, gv) in dp.data_mut().iter_mut().zip(&g.data()[offset..offset + n])
                            {
                                *d += gv;
                            }
                        }
                        offset += n;
                    }
                } else {
                    let rows = self.nodes[parts[0].0].value.shape()[0];
                    let total = node.value.shape()[1];
                    let mut offset = 0;
                    for p in parts {
                        let pv = &self.nodes[p.0].value;
                        let w = pv.shape()[1];
                        if needs(p) {
                            let dp = Self::grad_buf(acc, *p, pv.shape());
                            for r in 0..rows {
                                let src = &g.data()[r * total + offset..r * total + offset + w];
                                for (d, gv) in
                                    dp.data_mut()[r * w..(r + 1) * w].iter_mut().zip(src)
                                {
                                    *d += gv;
                                }
                            }
                        }
                        offset += w;
                    }
                }
            }
            Op::Slice { x, axis, start, len } => {
                if needs(x) {
                    let xv = &self.nodes[x.0].value;
                    let dx = Self::grad_buf(acc, *x, xv.shape());
                    match (xv.rank(), *axis) {
                        (1, 0) => {
                            for (d, gv) in dx.data_mut()[*start..start + len].iter_mut().zip(g.data())
                            {
                                *d += gv;
                            }
                        }
                        (2, 0) => {
                            let cols = xv.shape()[1];
                            for (d, gv) in dx.data_mut()[start * cols..(start + len) * cols]
                                .iter_mut()
                                .zip(g.data())
                            {
                                *d += gv;
                            }
                        }
                        (2, 1) => {
                            let cols = xv.shape()[1];
                            for (r, gchunk) in g.data().chunks(*len).enumerate() {
                                let dst =
                                    &mut dx.data_mut()[r * cols + start..r * cols + start + len];
                                for (d, gv) in dst.iter_mut().zip(gchunk) {
                                    *d += gv;
                                }
                            }
                        }
                        _ => unreachable!("validated at construction"),
                    }
                }
            }
            Op::SumAll { x } => {
                if needs(x) {
                    let gv = g.data()[0];
                    let dx = Self::grad_buf(acc, *x, self.nodes[x.0].value.shape());
                    for d in dx.data_mut() {
                        *d += gv;
                    }
                }
            }
            Op::MeanAll { x } => {
                if needs(x) {
                    let n = self.nodes[x.0].value.numel() as f64;
                    let gv = g.data()[0] / n;
                    let dx = Self::grad_buf(acc, *x, self.nodes[x.0].value.shape());
                    for d in dx.data_mut() {
                        *d += gv;
                    }
                }
            }
            Op::SumRows { x } => {
                if needs(x) {
                    let xv = &self.nodes[x.0].value;
                    let cols = xv.shape()[1];
                    let dx = Self::grad_buf(acc, *x, xv.shape());
                    for chunk in dx.data_mut().chunks_mut(cols) {
                        for (d, gv) in chunk.iter_mut().zip(g.data()) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::MeanRows { x } => {
                if needs(x) {
                    let xv = &self.nodes[x.0].value;
                    let cols = xv.shape()[1];
                    let rows = xv.shape()[0] as f64;
                    let dx = Self::grad_buf(acc, *x, xv.shape());
                    for chunk in dx.data_mut().chunks_mut(cols) {
                        for (d, gv) in chunk.iter_mut().zip(g.data()) {
                            *d += gv / rows;
                        }
                    }
                }
            }
            Op::ReverseRows { x } => {
                if needs(x) {
                    let xv = &self.nodes[x.0].value;
                    let cols = xv.cols();
                    let dx = Self::grad_buf(acc, *x, xv.shape());
                    for (dchunk, gchunk) in dx
                        .data_mut()
                        .chunks_mut(cols)
                        .rev()
                        .zip(g.data().chunks(cols))
                    {
                        for (d, gv) in dchunk.iter_mut().zip(gchunk) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Reshape { x } => {
                if needs(x) {
                    let dx = Self::grad_buf(acc, *x, self.nodes[x.0].value.shape());
                    for (d, gv) in dx.data_mut().iter_mut().zip(g.data()) {
                        *d += gv;
                    }
                }
            }
            Op::CtcLoss { log_probs, targets } => {
                if needs(log_probs) {
                    let lp = &self.nodes[log_probs.0].value;
                    let grad = ctc::ctc_loss_grad(lp, targets)?;
                    let gv = g.data()[0];
                    let dx = Self::grad_buf(acc, *log_probs, lp.shape());
                    for (d, gr) in dx.data_mut().iter_mut().zip(grad.data()) {
                        *d += gv * gr;
                    }
                }
            }
        }
        Ok(())
    }
}
