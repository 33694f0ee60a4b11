//! Inner loops shared by forward and backward op implementations.
//!
//! All matrix kernels accumulate into `out` (initialize with zeros for a
//! plain product); row kernels transform a single contiguous row in place.

/// out[m,n] += a[m,k] · b[k,n]
pub fn mm_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (l, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[l * n..(l + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// out[m,n] += a[m,k] · b[n,k]ᵀ
pub fn mm_nt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let dot: f64 = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            *o += dot;
        }
    }
}

/// out[k,n] += a[m,k]ᵀ · b[m,n]
pub fn mm_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (l, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[l * n..(l + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// In-place numerically stable softmax of one row.
pub fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// In-place numerically stable log-softmax of one row.
pub fn log_softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for v in row.iter_mut() {
        *v -= lse;
    }
}

/// Variance guard: small enough not to disturb unit-variance outputs on
/// ordinary activations, large enough to keep constant rows finite.
pub const LAYER_NORM_EPS: f64 = 1e-8;

/// In-place standardization of one row to zero mean, unit variance.
pub fn layer_norm_row(row: &mut [f64]) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for v in row.iter_mut() {
        *v = (*v - mean) * inv;
    }
}

/// Gradient of `layer_norm_row`: given input row `x`, output row `y`,
/// incoming gradient `g`, accumulate into `dx`.
pub fn layer_norm_bwd(x: &[f64], y: &[f64], g: &[f64], dx: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    let g_mean = g.iter().sum::<f64>() / n;
    let gy_mean = g.iter().zip(y).map(|(gv, yv)| gv * yv).sum::<f64>() / n;
    for ((d, &gv), &yv) in dx.iter_mut().zip(g).zip(y) {
        *d += inv * (gv - g_mean - yv * gy_mean);
    }
}

/// Valid or same-padded strided convolution: x [T,C_in], kernel
/// [C_out,C_in,K], out [T_out,C_out].
#[allow(clippy::too_many_arguments)]
pub fn conv1d_fwd(
    x: &[f64],
    kernel: &[f64],
    t_in: usize,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    same_pad: bool,
    out: &mut [f64],
) {
    let pad = if same_pad { k / 2 } else { 0 };
    let t_out = if same_pad { t_in } else { (t_in - k) / stride + 1 };
    for t in 0..t_out {
        let out_row = &mut out[t * c_out..(t + 1) * c_out];
        for kk in 0..k {
            let src = (t * stride + kk) as isize - pad as isize;
            if src < 0 || src as usize >= t_in {
                continue;
            }
            let x_row = &x[src as usize * c_in..(src as usize + 1) * c_in];
            for (co, o) in out_row.iter_mut().enumerate() {
                let k_row = &kernel[(co * c_in) * k + kk..];
                let mut sum = 0.0;
                for (ci, &xv) in x_row.iter().enumerate() {
                    sum += xv * k_row[ci * k];
                }
                *o += sum;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv1d_bwd_input(
    g: &[f64],
    kernel: &[f64],
    t_in: usize,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    same_pad: bool,
    dx: &mut [f64],
) {
    let pad = if same_pad { k / 2 } else { 0 };
    let t_out = if same_pad { t_in } else { (t_in - k) / stride + 1 };
    for t in 0..t_out {
        let g_row = &g[t * c_out..(t + 1) * c_out];
        for kk in 0..k {
            let src = (t * stride + kk) as isize - pad as isize;
            if src < 0 || src as usize >= t_in {
                continue;
            }
            let dx_row = &mut dx[src as usize * c_in..(src as usize + 1) * c_in];
            for (co, &gv) in g_row.iter().enumerate() {
                if gv == 0.0 {
                    continue;
                }
                let k_row = &kernel[(co * c_in) * k + kk..];
                for (ci, d) in dx_row.iter_mut().enumerate() {
                    *d += gv * k_row[ci * k];
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv1d_bwd_kernel(
    g: &[f64],
    x: &[f64],
    t_in: usize,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    same_pad: bool,
    dk: &mut [f64],
) {
    let pad = if same_pad { k / 2 } else { 0 };
    let t_out = if same_pad { t_in } else { (t_in - k) / stride + 1 };
    for t in 0..t_out {
        let g_row = &g[t * c_out..(t + 1) * c_out];
        for kk in 0..k {
            let src = (t * stride + kk) as isize - pad as isize;
            if src < 0 || src as usize >= t_in {
                continue;
            }
            let x_row = &x[src as usize * c_in..(src as usize + 1) * c_in];
            for (co, &gv) in g_row.iter().enumerate() {
                if gv == 0.0 {
                    continue;
                }
                let base = (co * c_in) * k + kk;
                for (ci, &xv) in x_row.iter().enumerate() {
                    dk[base + ci * k] += gv * xv;
                }
            }
        }
    }
}

/// Transposed convolution: x [T,C_in], kernel [C_in,C_out,K],
/// out [(T-1)*stride+K, C_out].
pub fn conv1d_transposed_fwd(
    x: &[f64],
    kernel: &[f64],
    t_in: usize,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    out: &mut [f64],
) {
    for t in 0..t_in {
        let x_row = &x[t * c_in..(t + 1) * c_in];
        for kk in 0..k {
            let dst = t * stride + kk;
            let out_row = &mut out[dst * c_out..(dst + 1) * c_out];
            for (ci, &xv) in x_row.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let k_row = &kernel[(ci * c_out) * k + kk..];
                for (co, o) in out_row.iter_mut().enumerate() {
                    *o += xv * k_row[co * k];
                }
            }
        }
    }
}

pub fn conv1d_transposed_bwd_input(
    g: &[f64],
    kernel: &[f64],
    t_in: usize,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    dx: &mut [f64],
) {
    for t in 0..t_in {
        let dx_row = &mut dx[t * c_in..(t + 1) * c_in];
        for kk in 0..k {
            let dst = t * stride + kk;
            let g_row = &g[dst * c_out..(dst + 1) * c_out];
            for (ci, d) in dx_row.iter_mut().enumerate() {
                let k_row = &kernel[(ci * c_out) * k + kk..];
                let mut sum = 0.0;
                for (co, &gv) in g_row.iter().enumerate() {
                    sum += gv * k_row[co * k];
                }
                *d += sum;
            }
        }
    }
}

pub fn conv1d_transposed_bwd_kernel(
    g: &[f64],
    x: &[f64],
    t_in: usize,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    dk: &mut [f64],
) {
    for t in 0..t_in {
        let x_row = &x[t * c_in..(t + 1) * c_in];
        for kk in 0..k {
            let dst = t * stride + kk;
            let g_row = &g[dst * c_out..(dst + 1) * c_out];
            for (ci, &xv) in x_row.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let base = (ci * c_out) * k + kk;
                for (co, &gv) in g_row.iter().enumerate() {
                    dk[base + co * k] += xv * gv;
                }
            }
        }
    }
}

/// Depthwise same-padded convolution: x [T,C], kernel [C,K] (K odd).
pub fn conv1d_depthwise_fwd(x: &[f64], kernel: &[f64], t_in: usize, c: usize, k: usize, out: &mut [f64]) {
    let pad = k / 2;
    for t in 0..t_in {
        let out_row = &mut out[t * c..(t + 1) * c];
        for kk in 0..k {
            let src = (t + kk) as isize - pad as isize;
            if src < 0 || src as usize >= t_in {
                continue;
            }
            let x_row = &x[src as usize * c..(src as usize + 1) * c];
            for (ch, (o, &xv)) in out_row.iter_mut().zip(x_row).enumerate() {
                *o += xv * kernel[ch * k + kk];
            }
        }
    }
}

pub fn conv1d_depthwise_bwd_input(g: &[f64], kernel: &[f64], t_in: usize, c: usize, k: usize, dx: &mut [f64]) {
    let pad = k / 2;
    for t in 0..t_in {
        let g_row = &g[t * c..(t + 1) * c];
        for kk in 0..k {
            let src = (t + kk) as isize - pad as isize;
            if src < 0 || src as usize >= t_in {
                continue;
            }
            let dx_row = &mut dx[src as usize * c..(src as usize + 1) * c];
            for (ch, (d, &gv)) in dx_row.iter_mut().zip(g_row).enumerate() {
                *d += gv * kernel[ch * k + kk];
            }
        }
    }
}

pub fn conv1d_depthwise_bwd_kernel(g: &[f64], x: &[f64], t_in: usize, c: usize, k: usize, dk: &mut [f64]) {
    let pad = k / 2;
    for t in 0..t_in {
        let g_row = &g[t * c..(t + 1) * c];
        for kk in 0..k {
            let src = (t + kk) as isize - pad as isize;
            if src < 0 || src as usize >= t_in {
                continue;
            }
            let x_row = &x[src as usize * c..(src as usize + 1) * c];
            for (ch, (&gv, &xv)) in g_row.iter().zip(x_row).enumerate() {
                dk[ch * k + kk] += gv * xv;
            }
        }
    }
}
