//! Pure tensor kernels: convolutions, normalization, activations, matrix
//! products and reductions.
//!
//! Every function here is deterministic. Rayon is used only across disjoint
//! output regions (planes, rows, matrices) so the reduction order inside any
//! single output element is fixed regardless of thread count.

use rayon::prelude::*;

use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::tensor::Tensor4;
use crate::Result;

/// Minimum number of scalar ops before a kernel bothers with rayon.
const PAR_THRESHOLD: usize = 32_768;

#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        acc = acc + *x * *y;
    }
    acc
}

#[inline]
fn axpy<S: Scalar>(out: &mut [S], k: S, x: &[S]) {
    debug_assert_eq!(out.len(), x.len());
    for (o, v) in out.iter_mut().zip(x.iter()) {
        *o = *o + k * *v;
    }
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

pub fn zip2<S: Scalar>(
    op: &'static str,
    a: &Tensor4<S>,
    b: &Tensor4<S>,
    f: impl Fn(S, S) -> S,
) -> Result<Tensor4<S>> {
    if a.dims() != b.dims() {
        return Err(TensorError::shape(
            op,
            format!("dims {:?} vs {:?}", a.dims(), b.dims()),
        ));
    }
    let (n, c, h, w) = a.dims();
    let data = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor4::from_vec(n, c, h, w, data)
}

pub fn add<S: Scalar>(a: &Tensor4<S>, b: &Tensor4<S>) -> Result<Tensor4<S>> {
    zip2("add", a, b, |x, y| x + y)
}

pub fn sub<S: Scalar>(a: &Tensor4<S>, b: &Tensor4<S>) -> Result<Tensor4<S>> {
    zip2("sub", a, b, |x, y| x - y)
}

pub fn mul<S: Scalar>(a: &Tensor4<S>, b: &Tensor4<S>) -> Result<Tensor4<S>> {
    zip2("mul", a, b, |x, y| x * y)
}

pub fn div<S: Scalar>(a: &Tensor4<S>, b: &Tensor4<S>) -> Result<Tensor4<S>> {
    zip2("div", a, b, |x, y| x / y)
}

/// `k*x + m` elementwise with constant coefficients.
pub fn affine<S: Scalar>(x: &Tensor4<S>, k: S, m: S) -> Tensor4<S> {
    x.map(|v| k * v + m)
}

/// Adds `b` (with batch dim 1) to every batch slice of `a`.
pub fn add_bias_n<S: Scalar>(a: &Tensor4<S>, b: &Tensor4<S>) -> Result<Tensor4<S>> {
    let (n, c, h, w) = a.dims();
    if b.dims() != (1, c, h, w) {
        return Err(TensorError::shape(
            "add_bias_n",
            format!("bias dims {:?} vs input {:?}", b.dims(), a.dims()),
        ));
    }
    let mut out = a.clone();
    let chw = c * h * w;
    for i in 0..n {
        axpy(&mut out.data_mut()[i * chw..(i + 1) * chw], S::one(), b.data());
    }
    Ok(out)
}

#[inline]
pub fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

pub fn sigmoid<S: Scalar>(x: &Tensor4<S>) -> Tensor4<S> {
    x.map(sigmoid_scalar)
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact-erf form: `0.5 * x * (1 + erf(x / sqrt(2)))`.
#[inline]
pub fn gelu_scalar<S: Scalar>(x: S) -> S {
    let half = S::from64(0.5);
    half * x * (S::one() + (x * S::from64(FRAC_1_SQRT_2)).erf())
}

/// d/dx gelu = Phi(x) + x * phi(x).
#[inline]
pub fn gelu_grad_scalar<S: Scalar>(x: S) -> S {
    let half = S::from64(0.5);
    let phi_cdf = half * (S::one() + (x * S::from64(FRAC_1_SQRT_2)).erf());
    let pdf = S::from64(INV_SQRT_2PI) * (-(x * x) * half).exp();
    phi_cdf + x * pdf
}

pub fn gelu<S: Scalar>(x: &Tensor4<S>) -> Tensor4<S> {
    x.map(gelu_scalar)
}

pub fn clamp<S: Scalar>(x: &Tensor4<S>, lo: S, hi: S) -> Tensor4<S> {
    x.map(|v| if v < lo { lo } else if v > hi { hi } else { v })
}

pub fn sum_all<S: Scalar>(x: &Tensor4<S>) -> S {
    x.data().iter().copied().sum()
}

pub fn mean_all<S: Scalar>(x: &Tensor4<S>) -> S {
    sum_all(x) / S::from64(x.numel() as f64)
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// Row softmax over the last axis, with max subtraction for stability.
pub fn softmax_lastdim<S: Scalar>(x: &Tensor4<S>) -> Tensor4<S> {
    let (n, c, h, w) = x.dims();
    let rows = n * c * h;
    let mut out = x.clone();
    let apply = |row: &mut [S]| {
        let mut m = row[0];
        for &v in row.iter() {
            if v > m {
                m = v;
            }
        }
        let mut s = S::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s = s + *v;
        }
        let inv = S::one() / s;
        for v in row.iter_mut() {
            *v = *v * inv;
        }
    };
    if rows * w >= PAR_THRESHOLD {
        out.data_mut().par_chunks_mut(w).for_each(apply);
    } else {
        out.data_mut().chunks_mut(w).for_each(apply);
    }
    out
}

/// VJP of `softmax_lastdim` given the softmax output `y`.
pub fn softmax_lastdim_vjp<S: Scalar>(y: &Tensor4<S>, grad: &Tensor4<S>) -> Tensor4<S> {
    let w = y.w();
    let mut out = grad.clone();
    out.data_mut()
        .chunks_mut(w)
        .zip(y.data().chunks(w))
        .for_each(|(g_row, y_row)| {
            let s = dot(g_row, y_row);
            for (g, &yv) in g_row.iter_mut().zip(y_row.iter()) {
                *g = yv * (*g - s);
            }
        });
    out
}

// ---------------------------------------------------------------------------
// Layer normalization over the channel axis
// ---------------------------------------------------------------------------

/// Standardizes the channel vector at every (n,h,w) site (population
/// variance), then scales by `gamma` and shifts by `beta` (both length c).
pub fn layer_norm<S: Scalar>(
    x: &Tensor4<S>,
    gamma: &Tensor4<S>,
    beta: &Tensor4<S>,
    eps: S,
) -> Result<Tensor4<S>> {
    let (n, c, h, w) = x.dims();
    if gamma.numel() != c || beta.numel() != c {
        return Err(TensorError::shape(
            "layer_norm",
            format!(
                "gamma/beta length {}/{} vs {} channels",
                gamma.numel(),
                beta.numel(),
                c
            ),
        ));
    }
    if eps <= S::zero() {
        return Err(TensorError::invalid("layer_norm", "eps must be > 0"));
    }
    let hw = h * w;
    let inv_c = S::one() / S::from64(c as f64);
    let mut out = x.zeros_like();
    for ni in 0..n {
        // Plane-wise accumulation keeps the memory access contiguous.
        let mut mean = vec![S::zero(); hw];
        let mut sq = vec![S::zero(); hw];
        for ci in 0..c {
            for (s, &v) in mean.iter_mut().zip(x.plane(ni, ci)) {
                *s = *s + v;
            }
            for (s, &v) in sq.iter_mut().zip(x.plane(ni, ci)) {
                *s = *s + v * v;
            }
        }
        let mut inv_std = vec![S::zero(); hw];
        for i in 0..hw {
            mean[i] = mean[i] * inv_c;
            let var = sq[i] * inv_c - mean[i] * mean[i];
            inv_std[i] = S::one() / (var + eps).sqrt();
        }
        for ci in 0..c {
            let g = gamma.data()[ci];
            let b = beta.data()[ci];
            let xin = x.plane(ni, ci);
            let o = out.plane_mut(ni, ci);
            for i in 0..hw {
                o[i] = (xin[i] - mean[i]) * inv_std[i] * g + b;
            }
        }
    }
    Ok(out)
}

/// VJP of [`layer_norm`]: gradients for (x, gamma, beta).
pub fn layer_norm_vjp<S: Scalar>(
    x: &Tensor4<S>,
    gamma: &Tensor4<S>,
    eps: S,
    grad: &Tensor4<S>,
) -> (Tensor4<S>, Tensor4<S>, Tensor4<S>) {
    let (n, c, h, w) = x.dims();
    let hw = h * w;
    let inv_c = S::one() / S::from64(c as f64);
    let mut dx = x.zeros_like();
    let mut dgamma = Tensor4::zeros(1, 1, 1, c);
    let mut dbeta = Tensor4::zeros(1, 1, 1, c);
    let mut xhat = vec![S::zero(); c * hw];
    for ni in 0..n {
        let mut mean = vec![S::zero(); hw];
        let mut sq = vec![S::zero(); hw];
        for ci in 0..c {
            for (s, &v) in mean.iter_mut().zip(x.plane(ni, ci)) {
                *s = *s + v;
            }
            for (s, &v) in sq.iter_mut().zip(x.plane(ni, ci)) {
                *s = *s + v * v;
            }
        }
        let mut inv_std = vec![S::zero(); hw];
        for i in 0..hw {
            mean[i] = mean[i] * inv_c;
            let var = sq[i] * inv_c - mean[i] * mean[i];
            inv_std[i] = S::one() / (var + eps).sqrt();
        }
        // Per-site sums of gamma*g and gamma*g*xhat.
        let mut s1 = vec![S::zero(); hw];
        let mut s2 = vec![S::zero(); hw];
        for ci in 0..c {
            let g = gamma.data()[ci];
            let xin = x.plane(ni, ci);
            let gr = grad.plane(ni, ci);
            let xh = &mut xhat[ci * hw..(ci + 1) * hw];
            for i in 0..hw {
                xh[i] = (xin[i] - mean[i]) * inv_std[i];
                let gg = g * gr[i];
                s1[i] = s1[i] + gg;
                s2[i] = s2[i] + gg * xh[i];
            }
        }
        for ci in 0..c {
            let g = gamma.data()[ci];
            let gr = grad.plane(ni, ci);
            let xh = &xhat[ci * hw..(ci + 1) * hw];
            let dxp = dx.plane_mut(ni, ci);
            let mut dg = S::zero();
            let mut db = S::zero();
            for i in 0..hw {
                dxp[i] = inv_std[i] * (g * gr[i] - (s1[i] + xh[i] * s2[i]) * inv_c);
                dg = dg + gr[i] * xh[i];
                db = db + gr[i];
            }
            dgamma.data_mut()[ci] = dgamma.data()[ci] + dg;
            dbeta.data_mut()[ci] = dbeta.data()[ci] + db;
        }
    }
    (dx, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// Linear projection over the last axis
// ---------------------------------------------------------------------------

/// `y[..., o] = sum_i x[..., i] * w[o, i] + b[o]` where `w` is `(1,1,o,i)`.
pub fn linear<S: Scalar>(
    x: &Tensor4<S>,
    w: &Tensor4<S>,
    b: Option<&Tensor4<S>>,
) -> Result<Tensor4<S>> {
    let (n, c, t, i_dim) = x.dims();
    let (wn, wc, o_dim, wi) = w.dims();
    if wn != 1 || wc != 1 || wi != i_dim {
        return Err(TensorError::shape(
            "linear",
            format!("weight dims {:?} vs input feature {}", w.dims(), i_dim),
        ));
    }
    if let Some(b) = b {
        if b.numel() != o_dim {
            return Err(TensorError::shape(
                "linear",
                format!("bias length {} vs out features {}", b.numel(), o_dim),
            ));
        }
    }
    let rows = n * c * t;
    let mut out = Tensor4::zeros(n, c, t, o_dim);
    let wd = w.data();
    let run = |(y_row, x_row): (&mut [S], &[S])| {
        for (o, y) in y_row.iter_mut().enumerate() {
            let mut acc = dot(x_row, &wd[o * i_dim..(o + 1) * i_dim]);
            if let Some(b) = b {
                acc = acc + b.data()[o];
            }
            *y = acc;
        }
    };
    if rows * i_dim * o_dim >= PAR_THRESHOLD {
        out.data_mut()
            .par_chunks_mut(o_dim)
            .zip(x.data().par_chunks(i_dim))
            .for_each(run);
    } else {
        out.data_mut()
            .chunks_mut(o_dim)
            .zip(x.data().chunks(i_dim))
            .for_each(run);
    }
    Ok(out)
}

/// Gradients of [`linear`] for (x, w, b).
pub fn linear_vjp<S: Scalar>(
    x: &Tensor4<S>,
    w: &Tensor4<S>,
    grad: &Tensor4<S>,
) -> (Tensor4<S>, Tensor4<S>, Tensor4<S>) {
    let (n, c, t, i_dim) = x.dims();
    let o_dim = w.h();
    let rows = n * c * t;
    let wd = w.data();

    let mut dx = Tensor4::zeros(n, c, t, i_dim);
    let run = |(dx_row, g_row): (&mut [S], &[S])| {
        for (o, &g) in g_row.iter().enumerate() {
            axpy(dx_row, g, &wd[o * i_dim..(o + 1) * i_dim]);
        }
    };
    if rows * i_dim * o_dim >= PAR_THRESHOLD {
        dx.data_mut()
            .par_chunks_mut(i_dim)
            .zip(grad.data().par_chunks(o_dim))
            .for_each(run);
    } else {
        dx.data_mut()
            .chunks_mut(i_dim)
            .zip(grad.data().chunks(o_dim))
            .for_each(run);
    }

    let mut dw = Tensor4::zeros(1, 1, o_dim, i_dim);
    let mut db = Tensor4::zeros(1, 1, 1, o_dim);
    for (g_row, x_row) in grad.data().chunks(o_dim).zip(x.data().chunks(i_dim)) {
        for (o, &g) in g_row.iter().enumerate() {
            axpy(&mut dw.data_mut()[o * i_dim..(o + 1) * i_dim], g, x_row);
            db.data_mut()[o] = db.data()[o] + g;
        }
    }
    (dx, dw, db)
}

// ---------------------------------------------------------------------------
// Batched matrix multiply
// ---------------------------------------------------------------------------

fn matmul_rows<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    // ikj order: the inner loop is a contiguous axpy over b's rows.
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let o_row = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in a_row.iter().enumerate() {
            axpy(o_row, av, &b[kk * n..(kk + 1) * n]);
        }
    }
}

fn transpose_mat<S: Scalar>(a: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut out = vec![S::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Batched matmul over the (n,c) axes: `out = op(a) . op(b)` per matrix,
/// where `op` optionally transposes the trailing two axes.
pub fn bmm<S: Scalar>(
    a: &Tensor4<S>,
    b: &Tensor4<S>,
    ta: bool,
    tb: bool,
) -> Result<Tensor4<S>> {
    let (an, ac, ah, aw) = a.dims();
    let (bn, bc, bh, bw) = b.dims();
    if (an, ac) != (bn, bc) {
        return Err(TensorError::shape(
            "bmm",
            format!("batch dims {:?} vs {:?}", (an, ac), (bn, bc)),
        ));
    }
    let (m, ka) = if ta { (aw, ah) } else { (ah, aw) };
    let (kb, nn) = if tb { (bw, bh) } else { (bh, bw) };
    if ka != kb {
        return Err(TensorError::shape(
            "bmm",
            format!("inner dims {ka} vs {kb}"),
        ));
    }
    let mut out = Tensor4::zeros(an, ac, m, nn);
    let batch = an * ac;
    let a_sz = ah * aw;
    let b_sz = bh * bw;
    let o_sz = m * nn;
    let work = batch * m * ka * nn;
    let run = |(bi, o_mat): (usize, &mut [S])| {
        let a_mat = &a.data()[bi * a_sz..(bi + 1) * a_sz];
        let b_mat = &b.data()[bi * b_sz..(bi + 1) * b_sz];
        let a_eff;
        let a_ref: &[S] = if ta {
            a_eff = transpose_mat(a_mat, ah, aw);
            &a_eff
        } else {
            a_mat
        };
        let b_eff;
        let b_ref: &[S] = if tb {
            b_eff = transpose_mat(b_mat, bh, bw);
            &b_eff
        } else {
            b_mat
        };
        matmul_rows(a_ref, b_ref, m, ka, nn, o_mat);
    };
    if work >= PAR_THRESHOLD {
        out.data_mut()
            .par_chunks_mut(o_sz)
            .enumerate()
            .for_each(run);
    } else {
        out.data_mut().chunks_mut(o_sz).enumerate().for_each(run);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

fn conv_out_dim(len: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = len + 2 * pad;
    if padded < k {
        return Err(TensorError::shape(
            "conv2d",
            format!("kernel {k} larger than padded input {padded}"),
        ));
    }
    Ok((padded - k) / stride + 1)
}

/// Accumulates one (input plane, kernel) cross-correlation into `out`.
#[allow(clippy::too_many_arguments)]
fn accum_corr_plane<S: Scalar>(
    out: &mut [S],
    oh: usize,
    ow: usize,
    input: &[S],
    h: usize,
    w: usize,
    kernel: &[S],
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) {
    for ky in 0..kh {
        for kx in 0..kw {
            let kv = kernel[ky * kw + kx];
            for oy in 0..oh {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                let in_row = &input[iy as usize * w..(iy as usize + 1) * w];
                let out_row = &mut out[oy * ow..(oy + 1) * ow];
                if stride == 1 {
                    let off = kx as isize - pad as isize;
                    let o_start = (-off).max(0) as usize;
                    let o_end = ((w as isize - off).min(ow as isize)).max(0) as usize;
                    if o_start >= o_end {
                        continue;
                    }
                    let i_start = (o_start as isize + off) as usize;
                    axpy(
                        &mut out_row[o_start..o_end],
                        kv,
                        &in_row[i_start..i_start + (o_end - o_start)],
                    );
                } else {
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            out_row[ox] = out_row[ox] + kv * in_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Standard cross-correlation with zero padding.
///
/// `x (n, c_in, h, w)`, `weight (c_out, c_in, kh, kw)`, optional bias of
/// length `c_out`.
pub fn conv2d<S: Scalar>(
    x: &Tensor4<S>,
    weight: &Tensor4<S>,
    bias: Option<&Tensor4<S>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor4<S>> {
    let (n, c_in, h, w) = x.dims();
    let (c_out, wc, kh, kw) = weight.dims();
    if wc != c_in {
        return Err(TensorError::shape(
            "conv2d",
            format!("weight expects {wc} input channels, tensor has {c_in}"),
        ));
    }
    if stride < 1 {
        return Err(TensorError::invalid("conv2d", "stride must be >= 1"));
    }
    if let Some(b) = bias {
        if b.numel() != c_out {
            return Err(TensorError::shape(
                "conv2d",
                format!("bias length {} vs {c_out} output channels", b.numel()),
            ));
        }
    }
    let oh = conv_out_dim(h, kh, stride, pad)?;
    let ow = conv_out_dim(w, kw, stride, pad)?;
    let mut out = Tensor4::zeros(n, c_out, oh, ow);
    let plane = oh * ow;
    let work = n * c_out * c_in * kh * kw * plane;
    let run = |(pi, o_plane): (usize, &mut [S])| {
        let ni = pi / c_out;
        let co = pi % c_out;
        if let Some(b) = bias {
            o_plane.fill(b.data()[co]);
        }
        for ci in 0..c_in {
            accum_corr_plane(
                o_plane,
                oh,
                ow,
                x.plane(ni, ci),
                h,
                w,
                weight.plane(co, ci),
                kh,
                kw,
                stride,
                pad,
            );
        }
    };
    if work >= PAR_THRESHOLD {
        out.data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(run);
    } else {
        out.data_mut().chunks_mut(plane).enumerate().for_each(run);
    }
    Ok(out)
}

/// Gradient of [`conv2d`] with respect to the input.
pub fn conv2d_vjp_input<S: Scalar>(
    grad: &Tensor4<S>,
    weight: &Tensor4<S>,
    stride: usize,
    pad: usize,
    h: usize,
    w: usize,
) -> Tensor4<S> {
    let (n, c_out, oh, ow) = grad.dims();
    let c_in = weight.c();
    let (kh, kw) = (weight.h(), weight.w());
    let mut dx = Tensor4::zeros(n, c_in, h, w);
    let plane = h * w;
    let run = |(pi, dx_plane): (usize, &mut [S])| {
        let ni = pi / c_in;
        let ci = pi % c_in;
        for co in 0..c_out {
            let g_plane = grad.plane(ni, co);
            let kernel = weight.plane(co, ci);
            for ky in 0..kh {
                for kx in 0..kw {
                    let kv = kernel[ky * kw + kx];
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dx_row = &mut dx_plane[iy as usize * w..(iy as usize + 1) * w];
                        let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            let off = kx as isize - pad as isize;
                            let o_start = (-off).max(0) as usize;
                            let o_end = ((w as isize - off).min(ow as isize)).max(0) as usize;
                            if o_start >= o_end {
                                continue;
                            }
                            let i_start = (o_start as isize + off) as usize;
                            axpy(
                                &mut dx_row[i_start..i_start + (o_end - o_start)],
                                kv,
                                &g_row[o_start..o_end],
                            );
                        } else {
                            for ox in 0..ow {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    dx_row[ix as usize] = dx_row[ix as usize] + kv * g_row[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    let work = n * c_in * c_out * kh * kw * plane;
    if work >= PAR_THRESHOLD {
        dx.data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(run);
    } else {
        dx.data_mut().chunks_mut(plane).enumerate().for_each(run);
    }
    dx
}

/// Gradient of [`conv2d`] with respect to the weight.
pub fn conv2d_vjp_weight<S: Scalar>(
    x: &Tensor4<S>,
    grad: &Tensor4<S>,
    stride: usize,
    pad: usize,
    kh: usize,
    kw: usize,
) -> Tensor4<S> {
    let (n, c_in, h, w) = x.dims();
    let (_, c_out, oh, ow) = grad.dims();
    let mut dw = Tensor4::zeros(c_out, c_in, kh, kw);
    let k_plane = c_in * kh * kw;
    let run = |(co, dw_slice): (usize, &mut [S])| {
        for ni in 0..n {
            let g_plane = grad.plane(ni, co);
            for ci in 0..c_in {
                let x_plane = x.plane(ni, ci);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let mut acc = S::zero();
                        for oy in 0..oh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let x_row = &x_plane[iy as usize * w..(iy as usize + 1) * w];
                            let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                            if stride == 1 {
                                let off = kx as isize - pad as isize;
                                let o_start = (-off).max(0) as usize;
                                let o_end =
                                    ((w as isize - off).min(ow as isize)).max(0) as usize;
                                if o_start >= o_end {
                                    continue;
                                }
                                let i_start = (o_start as isize + off) as usize;
                                acc = acc
                                    + dot(
                                        &g_row[o_start..o_end],
                                        &x_row[i_start..i_start + (o_end - o_start)],
                                    );
                            } else {
                                for ox in 0..ow {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix >= 0 && ix < w as isize {
                                        acc = acc + g_row[ox] * x_row[ix as usize];
                                    }
                                }
                            }
                        }
                        let di = (ci * kh + ky) * kw + kx;
                        dw_slice[di] = dw_slice[di] + acc;
                    }
                }
            }
        }
    };
    let work = n * c_out * k_plane * oh * ow;
    if work >= PAR_THRESHOLD {
        dw.data_mut()
            .par_chunks_mut(k_plane)
            .enumerate()
            .for_each(run);
    } else {
        dw.data_mut().chunks_mut(k_plane).enumerate().for_each(run);
    }
    dw
}

/// Sums `grad` over (n, h, w) per output channel.
pub fn conv2d_vjp_bias<S: Scalar>(grad: &Tensor4<S>) -> Tensor4<S> {
    let (n, c_out, _, _) = grad.dims();
    let mut db = Tensor4::zeros(1, 1, 1, c_out);
    for ni in 0..n {
        for co in 0..c_out {
            let s: S = grad.plane(ni, co).iter().copied().sum();
            db.data_mut()[co] = db.data()[co] + s;
        }
    }
    db
}

/// Transposed convolution: the adjoint of [`conv2d`] with the same weight
/// and stride (zero padding). `weight (c_in, c_out, kh, kw)`; output spatial
/// dims are `(len-1)*stride + k`.
pub fn conv_transpose2d<S: Scalar>(
    x: &Tensor4<S>,
    weight: &Tensor4<S>,
    bias: Option<&Tensor4<S>>,
    stride: usize,
) -> Result<Tensor4<S>> {
    let (n, c_in, h, w) = x.dims();
    let (wn, c_out, kh, kw) = weight.dims();
    if wn != c_in {
        return Err(TensorError::shape(
            "conv_transpose2d",
            format!("weight expects {wn} input channels, tensor has {c_in}"),
        ));
    }
    if stride < 1 {
        return Err(TensorError::invalid("conv_transpose2d", "stride must be >= 1"));
    }
    if let Some(b) = bias {
        if b.numel() != c_out {
            return Err(TensorError::shape(
                "conv_transpose2d",
                format!("bias length {} vs {c_out} output channels", b.numel()),
            ));
        }
    }
    let oh = (h - 1) * stride + kh;
    let ow = (w - 1) * stride + kw;
    let mut out = Tensor4::zeros(n, c_out, oh, ow);
    let plane = oh * ow;
    let run = |(pi, o_plane): (usize, &mut [S])| {
        let ni = pi / c_out;
        let co = pi % c_out;
        if let Some(b) = bias {
            o_plane.fill(b.data()[co]);
        }
        for ci in 0..c_in {
            let x_plane = x.plane(ni, ci);
            let kernel = weight.plane(ci, co);
            for ky in 0..kh {
                for kx in 0..kw {
                    let kv = kernel[ky * kw + kx];
                    for iy in 0..h {
                        let oy = iy * stride + ky;
                        let x_row = &x_plane[iy * w..(iy + 1) * w];
                        let o_row = &mut o_plane[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            axpy(&mut o_row[kx..kx + w], kv, x_row);
                        } else {
                            for (ix, &xv) in x_row.iter().enumerate() {
                                let ox = ix * stride + kx;
                                o_row[ox] = o_row[ox] + kv * xv;
                            }
                        }
                    }
                }
            }
        }
    };
    let work = n * c_out * c_in * kh * kw * h * w;
    if work >= PAR_THRESHOLD {
        out.data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(run);
    } else {
        out.data_mut().chunks_mut(plane).enumerate().for_each(run);
    }
    Ok(out)
}

/// Gradient of [`conv_transpose2d`] with respect to its input.
pub fn conv_transpose2d_vjp_input<S: Scalar>(
    grad: &Tensor4<S>,
    weight: &Tensor4<S>,
    stride: usize,
    h: usize,
    w: usize,
) -> Tensor4<S> {
    let (n, _c_out, _, ow) = grad.dims();
    let c_in = weight.n();
    let c_out = weight.c();
    let (kh, kw) = (weight.h(), weight.w());
    let mut dx = Tensor4::zeros(n, c_in, h, w);
    for ni in 0..n {
        for ci in 0..c_in {
            let dx_plane = dx.plane_mut(ni, ci);
            for co in 0..c_out {
                let g_plane = grad.plane(ni, co);
                let kernel = weight.plane(ci, co);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let kv = kernel[ky * kw + kx];
                        for iy in 0..h {
                            let oy = iy * stride + ky;
                            let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                            let dx_row = &mut dx_plane[iy * w..(iy + 1) * w];
                            for ix in 0..w {
                                dx_row[ix] = dx_row[ix] + kv * g_row[ix * stride + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Gradient of [`conv_transpose2d`] with respect to its weight.
pub fn conv_transpose2d_vjp_weight<S: Scalar>(
    x: &Tensor4<S>,
    grad: &Tensor4<S>,
    stride: usize,
    kh: usize,
    kw: usize,
) -> Tensor4<S> {
    let (n, c_in, h, w) = x.dims();
    let (_, c_out, _, ow) = grad.dims();
    let mut dw = Tensor4::zeros(c_in, c_out, kh, kw);
    for ni in 0..n {
        for ci in 0..c_in {
            let x_plane = x.plane(ni, ci);
            for co in 0..c_out {
                let g_plane = grad.plane(ni, co);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let mut acc = S::zero();
                        for iy in 0..h {
                            let oy = iy * stride + ky;
                            let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                            let x_row = &x_plane[iy * w..(iy + 1) * w];
                            for ix in 0..w {
                                acc = acc + x_row[ix] * g_row[ix * stride + kx];
                            }
                        }
                        let di = (ky) * kw + kx;
                        let base = (ci * c_out + co) * kh * kw;
                        dw.data_mut()[base + di] = dw.data()[base + di] + acc;
                    }
                }
            }
        }
    }
    dw
}

/// Per-channel convolution (one `1 x kh x kw` filter per channel), stride 1.
pub fn depthwise_conv2d<S: Scalar>(
    x: &Tensor4<S>,
    weight: &Tensor4<S>,
    bias: Option<&Tensor4<S>>,
    pad: usize,
) -> Result<Tensor4<S>> {
    let (n, c, h, w) = x.dims();
    let (wc, w1, kh, kw) = weight.dims();
    if wc != c || w1 != 1 {
        return Err(TensorError::shape(
            "depthwise_conv2d",
            format!("weight dims {:?} vs {} channels", weight.dims(), c),
        ));
    }
    if let Some(b) = bias {
        if b.numel() != c {
            return Err(TensorError::shape(
                "depthwise_conv2d",
                format!("bias length {} vs {} channels", b.numel(), c),
            ));
        }
    }
    let oh = conv_out_dim(h, kh, 1, pad)?;
    let ow = conv_out_dim(w, kw, 1, pad)?;
    let mut out = Tensor4::zeros(n, c, oh, ow);
    let plane = oh * ow;
    let run = |(pi, o_plane): (usize, &mut [S])| {
        let ni = pi / c;
        let ci = pi % c;
        if let Some(b) = bias {
            o_plane.fill(b.data()[ci]);
        }
        accum_corr_plane(
            o_plane,
            oh,
            ow,
            x.plane(ni, ci),
            h,
            w,
            weight.plane(ci, 0),
            kh,
            kw,
            1,
            pad,
        );
    };
    if n * c * kh * kw * plane >= PAR_THRESHOLD {
        out.data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(run);
    } else {
        out.data_mut().chunks_mut(plane).enumerate().for_each(run);
    }
    Ok(out)
}

/// Gradients of [`depthwise_conv2d`] for (x, weight, bias).
pub fn depthwise_conv2d_vjp<S: Scalar>(
    x: &Tensor4<S>,
    weight: &Tensor4<S>,
    pad: usize,
    grad: &Tensor4<S>,
) -> (Tensor4<S>, Tensor4<S>, Tensor4<S>) {
    let (n, c, h, w) = x.dims();
    let (_, _, kh, kw) = weight.dims();
    let (_, _, oh, ow) = grad.dims();
    let mut dx = Tensor4::zeros(n, c, h, w);
    let mut dw = Tensor4::zeros(c, 1, kh, kw);
    let mut db = Tensor4::zeros(1, 1, 1, c);
    for ni in 0..n {
        for ci in 0..c {
            let g_plane = grad.plane(ni, ci);
            let x_plane = x.plane(ni, ci);
            let kernel = weight.plane(ci, 0);
            let dx_plane = dx.plane_mut(ni, ci);
            for ky in 0..kh {
                for kx in 0..kw {
                    let kv = kernel[ky * kw + kx];
                    let mut acc = S::zero();
                    for oy in 0..oh {
                        let iy = (oy + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let off = kx as isize - pad as isize;
                        let o_start = (-off).max(0) as usize;
                        let o_end = ((w as isize - off).min(ow as isize)).max(0) as usize;
                        if o_start >= o_end {
                            continue;
                        }
                        let i_start = (o_start as isize + off) as usize;
                        let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                        let x_row = &x_plane[iy as usize * w..(iy as usize + 1) * w];
                        let dx_row = &mut dx_plane[iy as usize * w..(iy as usize + 1) * w];
                        axpy(
                            &mut dx_row[i_start..i_start + (o_end - o_start)],
                            kv,
                            &g_row[o_start..o_end],
                        );
                        acc = acc
                            + dot(
                                &g_row[o_start..o_end],
                                &x_row[i_start..i_start + (o_end - o_start)],
                            );
                    }
                    let wi = (ci * kh + ky) * kw + kx;
                    dw.data_mut()[wi] = dw.data()[wi] + acc;
                }
            }
            let s: S = g_plane.iter().copied().sum();
            db.data_mut()[ci] = db.data()[ci] + s;
        }
    }
    (dx, dw, db)
}

// ---------------------------------------------------------------------------
// Channel concat / slice
// ---------------------------------------------------------------------------

pub fn concat_channels<S: Scalar>(a: &Tensor4<S>, b: &Tensor4<S>) -> Result<Tensor4<S>> {
    let (n, ca, h, w) = a.dims();
    let (nb, cb, hb, wb) = b.dims();
    if (n, h, w) != (nb, hb, wb) {
        return Err(TensorError::shape(
            "concat_channels",
            format!("dims {:?} vs {:?}", a.dims(), b.dims()),
        ));
    }
    let mut out = Tensor4::zeros(n, ca + cb, h, w);
    for ni in 0..n {
        for ci in 0..ca {
            out.plane_mut(ni, ci).copy_from_slice(a.plane(ni, ci));
        }
        for ci in 0..cb {
            out.plane_mut(ni, ca + ci).copy_from_slice(b.plane(ni, ci));
        }
    }
    Ok(out)
}

pub fn slice_channels<S: Scalar>(x: &Tensor4<S>, c0: usize, c1: usize) -> Result<Tensor4<S>> {
    let (n, c, h, w) = x.dims();
    if c0 >= c1 || c1 > c {
        return Err(TensorError::invalid(
            "slice_channels",
            format!("range {c0}..{c1} out of {c} channels"),
        ));
    }
    let mut out = Tensor4::zeros(n, c1 - c0, h, w);
    for ni in 0..n {
        for ci in c0..c1 {
            out.plane_mut(ni, ci - c0).copy_from_slice(x.plane(ni, ci));
        }
    }
    Ok(out)
}
