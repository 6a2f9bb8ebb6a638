//! Forward and backward kernels for the network primitives.
//!
//! Convolutions and affine maps are lowered to matrix products; results
//! match a direct nested-loop sum up to floating-point reassociation.

use super::Tensor;
use crate::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;
pub const PROB_CLAMP: f64 = 1e-7;

pub(crate) fn dims5(x: &Tensor, op: &'static str) -> Result<[usize; 5]> {
    match *x.shape() {
        [n, t, h, w, c] => Ok([n, t, h, w, c]),
        ref s => Err(Error::shape(op, format!("expected [N,T,H,W,C], got {s:?}"))),
    }
}

pub(crate) fn dims3(x: &Tensor, op: &'static str) -> Result<[usize; 3]> {
    match *x.shape() {
        [n, t, d] => Ok([n, t, d]),
        ref s => Err(Error::shape(op, format!("expected [N,T,D], got {s:?}"))),
    }
}

fn check_bias(b: &Tensor, cout: usize, op: &'static str) -> Result<()> {
    if b.shape() != [cout] {
        return Err(Error::shape(
            op,
            format!("bias shape {:?} does not match {cout} output channels", b.shape()),
        ));
    }
    Ok(())
}

// ── 2D spatial convolution ──────────────────────────────────────────────

/// 3×3 spatial convolution with zero same-padding, applied per time step.
///
/// `x: [N,T,H,W,Cin]`, `w: [3,3,Cin,Cout]`, `b: [Cout]`.
pub fn conv2d_spatial(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [n, t, h, wd, cin] = dims5(x, "conv2d_spatial")?;
    let cout = match *w.shape() {
        [3, 3, c, co] if c == cin => co,
        ref s => {
            return Err(Error::shape(
                "conv2d_spatial",
                format!("kernel {s:?} incompatible with input channels {cin}; expected [3,3,{cin},Cout]"),
            ))
        }
    };
    check_bias(b, cout, "conv2d_spatial")?;
    let hw = h * wd;
    let kc = 9 * cin;
    let mut out = vec![0.0; n * t * hw * cout];
    let mut cols = Vec::new();
    for (f0, f1) in frame_chunks(n * t, hw * kc) {
        let rows = (f1 - f0) * hw;
        im2col(&x.data()[f0 * hw * cin..f1 * hw * cin], f1 - f0, h, wd, cin, &mut cols);
        let oc = &mut out[f0 * hw * cout..f1 * hw * cout];
        fill_bias(oc, b.data());
        gemm(rows, kc, cout, &cols, (kc, 1), w.data(), (cout, 1), 1.0, oc, cout);
    }
    Tensor::new(vec![n, t, h, wd, cout], out)
}

/// Gradients of [`conv2d_spatial`] w.r.t. input, kernel and bias.
pub(crate) fn conv2d_spatial_backward(
    x: &Tensor,
    w: &Tensor,
    g: &Tensor,
    need_x: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let [n, t, h, wd, cin] = dims5(x, "conv2d_spatial").expect("checked in forward");
    let cout = w.shape()[3];
    let hw = h * wd;
    let kc = 9 * cin;
    let gd = g.data();
    let mut gx = need_x.then(|| vec![0.0; x.numel()]);
    let mut gw = vec![0.0; w.numel()];
    let gb = column_sums(gd, cout);
    let mut cols = Vec::new();
    let mut gcols = Vec::new();
    for (f0, f1) in frame_chunks(n * t, hw * kc) {
        let rows = (f1 - f0) * hw;
        let gc = &gd[f0 * hw * cout..f1 * hw * cout];
        im2col(&x.data()[f0 * hw * cin..f1 * hw * cin], f1 - f0, h, wd, cin, &mut cols);
        gemm(kc, rows, cout, &cols, (1, kc), gc, (cout, 1), 1.0, &mut gw, cout);
        if let Some(gx) = gx.as_mut() {
            gcols.clear();
            gcols.resize(rows * kc, 0.0);
            gemm(rows, cout, kc, gc, (cout, 1), w.data(), (1, cout), 0.0, &mut gcols, kc);
            col2im_add(&gcols, f1 - f0, h, wd, cin, &mut gx[f0 * hw * cin..f1 * hw * cin]);
        }
    }
    (gx, gw, gb)
}

/// Frame ranges whose patch matrices stay near a fixed working-set size.
fn frame_chunks(frames: usize, per_frame: usize) -> impl Iterator<Item = (usize, usize)> {
    let step = ((1usize << 20) / per_frame.max(1)).max(1);
    (0..frames).step_by(step).map(move |f| (f, (f + step).min(frames)))
}

/// Patch matrix `[frames·H·W, 9·Cin]`, columns ordered `(ky, kx, ci)`.
fn im2col(x: &[f64], frames: usize, h: usize, w: usize, cin: usize, cols: &mut Vec<f64>) {
    let kc = 9 * cin;
    cols.clear();
    cols.resize(frames * h * w * kc, 0.0);
    for f in 0..frames {
        let xf = &x[f * h * w * cin..(f + 1) * h * w * cin];
        for oy in 0..h {
            for ox in 0..w {
                let row = &mut cols[((f * h + oy) * w + ox) * kc..((f * h + oy) * w + ox + 1) * kc];
                for ky in 0..3 {
                    let Some(iy) = (oy + ky).checked_sub(1).filter(|&v| v < h) else {
                        continue;
                    };
                    for kx in 0..3 {
                        let Some(ix) = (ox + kx).checked_sub(1).filter(|&v| v < w) else {
                            continue;
                        };
                        let dst = (ky * 3 + kx) * cin;
                        row[dst..dst + cin].copy_from_slice(&xf[(iy * w + ix) * cin..(iy * w + ix + 1) * cin]);
                    }
                }
            }
        }
    }
}

fn col2im_add(cols: &[f64], frames: usize, h: usize, w: usize, cin: usize, gx: &mut [f64]) {
    let kc = 9 * cin;
    for f in 0..frames {
        let gf = &mut gx[f * h * w * cin..(f + 1) * h * w * cin];
        for oy in 0..h {
            for ox in 0..w {
                let row = &cols[((f * h + oy) * w + ox) * kc..((f * h + oy) * w + ox + 1) * kc];
                for ky in 0..3 {
                    let Some(iy) = (oy + ky).checked_sub(1).filter(|&v| v < h) else {
                        continue;
                    };
                    for kx in 0..3 {
                        let Some(ix) = (ox + kx).checked_sub(1).filter(|&v| v < w) else {
                            continue;
                        };
                        let src = (ky * 3 + kx) * cin;
                        let dst = &mut gf[(iy * w + ix) * cin..(iy * w + ix + 1) * cin];
                        for (d, &v) in dst.iter_mut().zip(&row[src..src + cin]) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

/// `c ← beta·c + a·b` where `a` is `m×k`, `b` is `k×n` (both given by
/// row/column strides) and `c` is row-major with row stride `ldc`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (ars, acs): (usize, usize),
    b: &[f64],
    (brs, bcs): (usize, usize),
    beta: f64,
    c: &mut [f64],
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= (m - 1) * ldc + n, "gemm output too small");
    if k == 0 {
        for r in 0..m {
            c[r * ldc..r * ldc + n].iter_mut().for_each(|v| *v *= beta);
        }
        return;
    }
    assert!(a.len() > (m - 1) * ars + (k - 1) * acs, "gemm lhs too small");
    assert!(b.len() > (k - 1) * brs + (n - 1) * bcs, "gemm rhs too small");
    // SAFETY: the asserts above bound every element the call touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            ars as isize,
            acs as isize,
            b.as_ptr(),
            brs as isize,
            bcs as isize,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

fn fill_bias(out: &mut [f64], b: &[f64]) {
    for row in out.chunks_exact_mut(b.len()) {
        row.copy_from_slice(b);
    }
}

fn column_sums(g: &[f64], width: usize) -> Vec<f64> {
    let mut s = vec![0.0; width];
    for row in g.chunks_exact(width) {
        for (a, &v) in s.iter_mut().zip(row) {
            *a += v;
        }
    }
    s
}

// ── 1D temporal convolution ─────────────────────────────────────────────

/// Length-3 dilated temporal convolution with zero same-padding of width
/// `dilation`, applied per spatial location.
///
/// `x: [N,T,H,W,Cin]`, `w: [3,Cin,Cout]`, `b: [Cout]`.
pub fn conv1d_temporal(x: &Tensor, w: &Tensor, b: &Tensor, dilation: usize) -> Result<Tensor> {
    if dilation < 1 {
        return Err(Error::InvalidArgument("temporal dilation must be >= 1".into()));
    }
    let [n, t, h, wd, cin] = dims5(x, "conv1d_temporal")?;
    let cout = match *w.shape() {
        [3, c, co] if c == cin => co,
        ref s => {
            return Err(Error::shape(
                "conv1d_temporal",
                format!("kernel {s:?} incompatible with input channels {cin}; expected [3,{cin},Cout]"),
            ))
        }
    };
    check_bias(b, cout, "conv1d_temporal")?;
    let hw = h * wd;
    let mut out = vec![0.0; n * t * hw * cout];
    fill_bias(&mut out, b.data());
    let (xd, wv) = (x.data(), w.data());
    for ni in 0..n {
        for (k, ti, ts, len) in temporal_taps(t, dilation) {
            let rows = len * hw;
            let xs = &xd[((ni * t + ts) * hw) * cin..];
            let os = &mut out[((ni * t + ti) * hw) * cout..];
            gemm(rows, cin, cout, xs, (cin, 1), &wv[k * cin * cout..], (cout, 1), 1.0, os, cout);
        }
    }
    Tensor::new(vec![n, t, h, wd, cout], out)
}

/// Overlapping time ranges per kernel tap: `(tap, first output step, first
/// source step, length)`.
fn temporal_taps(t: usize, dilation: usize) -> impl Iterator<Item = (usize, usize, usize, usize)> {
    [(0, dilation, 0), (1, 0, 0), (2, 0, dilation)]
        .into_iter()
        .filter(move |&(k, ti, ts)| k == 1 || (ti.max(ts) < t))
        .map(move |(k, ti, ts)| (k, ti, ts, t - ti.max(ts)))
}

pub(crate) fn conv1d_temporal_backward(
    x: &Tensor,
    w: &Tensor,
    g: &Tensor,
    dilation: usize,
    need_x: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let [n, t, h, wd, cin] = dims5(x, "conv1d_temporal").expect("checked in forward");
    let cout = w.shape()[2];
    let hw = h * wd;
    let (xd, wv, gd) = (x.data(), w.data(), g.data());
    let mut gx = need_x.then(|| vec![0.0; xd.len()]);
    let mut gw = vec![0.0; wv.len()];
    let gb = column_sums(gd, cout);
    for ni in 0..n {
        for (k, ti, ts, len) in temporal_taps(t, dilation) {
            let rows = len * hw;
            let xs = &xd[((ni * t + ts) * hw) * cin..];
            let gs = &gd[((ni * t + ti) * hw) * cout..];
            let gwk = &mut gw[k * cin * cout..(k + 1) * cin * cout];
            gemm(cin, rows, cout, xs, (1, cin), gs, (cout, 1), 1.0, gwk, cout);
            if let Some(gx) = gx.as_mut() {
                let gxs = &mut gx[((ni * t + ts) * hw) * cin..];
                gemm(rows, cout, cin, gs, (cout, 1), &wv[k * cin * cout..], (1, cout), 1.0, gxs, cin);
            }
        }
    }
    (gx, gw, gb)
}

// ── batch normalisation ─────────────────────────────────────────────────

/// Per-channel statistics over every axis but the last.
pub fn channel_moments(x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = *x.shape().last().expect("tensors have rank >= 1");
    let m = x.numel() / c;
    let mut mean = vec![0.0; c];
    for row in x.data().chunks_exact(c) {
        for (s, &v) in mean.iter_mut().zip(row) {
            *s += v;
        }
    }
    for s in &mut mean {
        *s /= m as f64;
    }
    let mut var = vec![0.0; c];
    for row in x.data().chunks_exact(c) {
        for ((s, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - mu) * (v - mu);
        }
    }
    for s in &mut var {
        *s /= m as f64;
    }
    Ok((mean, var))
}

/// Normalised activations `(x - mean) / sqrt(var + eps)` and the per-channel
/// inverse standard deviations.
pub(crate) fn bn_normalize(x: &Tensor, mean: &[f64], var: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let c = mean.len();
    let mut xhat = Vec::with_capacity(x.numel());
    for row in x.data().chunks_exact(c) {
        for ((&v, &mu), &s) in row.iter().zip(mean).zip(&inv) {
            xhat.push((v - mu) * s);
        }
    }
    (xhat, inv)
}

pub(crate) fn bn_check(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<usize> {
    let c = *x.shape().last().expect("tensors have rank >= 1");
    if x.ndim() < 2 {
        return Err(Error::shape("batch_norm", "need at least one non-channel axis"));
    }
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(
            "batch_norm",
            format!(
                "gamma {:?} / beta {:?} do not match {c} channels",
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    Ok(c)
}

/// Running statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BnState {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnState {
    pub fn new(channels: usize) -> Self {
        BnState {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    /// `running = momentum * running + (1 - momentum) * batch`.
    pub fn update(&mut self, mean: &[f64], var: &[f64], momentum: f64) {
        for (r, &m) in self.mean.iter_mut().zip(mean) {
            *r = momentum * *r + (1.0 - momentum) * m;
        }
        for (r, &v) in self.var.iter_mut().zip(var) {
            *r = momentum * *r + (1.0 - momentum) * v;
        }
    }
}

/// Standalone batch norm. Train mode normalises with batch statistics and
/// folds them into `state`; eval mode uses `state` as is.
pub fn batch_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, state: &mut BnState, train: bool) -> Result<Tensor> {
    let c = bn_check(x, gamma, beta)?;
    if state.mean.len() != c {
        return Err(Error::shape("batch_norm", "running statistics have the wrong channel count"));
    }
    let (xhat, _) = if train {
        let (mean, var) = channel_moments(x)?;
        state.update(&mean, &var, BN_MOMENTUM);
        bn_normalize(x, &mean, &var)
    } else {
        bn_normalize(x, &state.mean, &state.var)
    };
    Ok(bn_affine(x.shape(), &xhat, gamma.data(), beta.data()))
}

pub(crate) fn bn_affine(shape: &[usize], xhat: &[f64], gamma: &[f64], beta: &[f64]) -> Tensor {
    let c = gamma.len();
    let mut out = Vec::with_capacity(xhat.len());
    for row in xhat.chunks_exact(c) {
        for ((&v, &g), &b) in row.iter().zip(gamma).zip(beta) {
            out.push(g * v + b);
        }
    }
    Tensor::new(shape.to_vec(), out).expect("same shape as input")
}

/// Returns (dx, dgamma, dbeta). `batch_stats` selects whether the mean and
/// variance depend on x (train mode) or are constants (eval mode).
pub(crate) fn bn_backward(
    g: &[f64],
    xhat: &[f64],
    inv: &[f64],
    gamma: &[f64],
    batch_stats: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = gamma.len();
    let m = (g.len() / c) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for (gr, xr) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
        for ch in 0..c {
            dgamma[ch] += gr[ch] * xr[ch];
            dbeta[ch] += gr[ch];
        }
    }
    let mut dx = Vec::with_capacity(g.len());
    for (gr, xr) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
        for ch in 0..c {
            let v = if batch_stats {
                // dxhat = g * gamma; sum(dxhat) = gamma * dbeta; sum(dxhat * xhat) = gamma * dgamma
                gamma[ch] * inv[ch] / m * (m * gr[ch] - dbeta[ch] - xr[ch] * dgamma[ch])
            } else {
                gamma[ch] * inv[ch] * gr[ch]
            };
            dx.push(v);
        }
    }
    (dx, dgamma, dbeta)
}

// ── elementwise and structural ops ──────────────────────────────────────

pub fn relu(x: &Tensor) -> Tensor {
    Tensor::from_fn(x.shape(), |i| x.data()[i].max(0.0))
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    Tensor::from_fn(x.shape(), |i| 1.0 / (1.0 + (-x.data()[i]).exp()))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape("add", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(Tensor::from_fn(a.shape(), |i| a.data()[i] + b.data()[i]))
}

/// Concatenation along the last (channel) axis.
pub fn concat_channels(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs
        .first()
        .ok_or_else(|| Error::shape("concat_channels", "no inputs"))?;
    let lead = &first.shape()[..first.ndim() - 1];
    for x in xs {
        if x.ndim() != first.ndim() || &x.shape()[..x.ndim() - 1] != lead {
            return Err(Error::shape(
                "concat_channels",
                format!("non-channel dims disagree: {:?} vs {:?}", first.shape(), x.shape()),
            ));
        }
    }
    let widths: Vec<usize> = xs.iter().map(|x| *x.shape().last().unwrap()).collect();
    let total: usize = widths.iter().sum();
    let rows: usize = lead.iter().product();
    let mut out = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for (x, &c) in xs.iter().zip(&widths) {
            out.extend_from_slice(&x.data()[r * c..(r + 1) * c]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    Tensor::new(shape, out)
}

/// Affine map on the last axis: `x: [..., Din]`, `w: [Din, Dout]`, `b: [Dout]`.
pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let din = *x.shape().last().unwrap();
    let dout = match *w.shape() {
        [d, o] if d == din => o,
        ref s => {
            return Err(Error::shape(
                "linear",
                format!("weight {s:?} incompatible with input width {din}"),
            ))
        }
    };
    if let Some(b) = b {
        check_bias(b, dout, "linear")?;
    }
    let rows = x.numel() / din;
    let mut out = vec![0.0; rows * dout];
    if let Some(b) = b {
        fill_bias(&mut out, b.data());
    }
    gemm(rows, din, dout, x.data(), (din, 1), w.data(), (dout, 1), 1.0, &mut out, dout);
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = dout;
    Tensor::new(shape, out)
}

pub(crate) fn linear_backward(x: &Tensor, w: &Tensor, g: &Tensor, need_x: bool) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let din = w.shape()[0];
    let dout = w.shape()[1];
    let rows = x.numel() / din;
    let mut gw = vec![0.0; w.numel()];
    gemm(din, rows, dout, x.data(), (1, din), g.data(), (dout, 1), 0.0, &mut gw, dout);
    let gb = column_sums(g.data(), dout);
    let gx = need_x.then(|| {
        let mut gx = vec![0.0; x.numel()];
        gemm(rows, dout, din, g.data(), (dout, 1), w.data(), (1, dout), 0.0, &mut gx, din);
        gx
    });
    (gx, gw, gb)
}

/// 2×2 average pooling over H and W (floor for odd sizes).
pub fn avg_pool2(x: &Tensor) -> Result<Tensor> {
    let [n, t, h, w, c] = dims5(x, "avg_pool2")?;
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(Error::shape("avg_pool2", format!("spatial size {h}x{w} too small to pool")));
    }
    let mut out = vec![0.0; n * t * oh * ow * c];
    let xd = x.data();
    for f in 0..n * t {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = ((f * oh + oy) * ow + ox) * c;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let i = ((f * h + 2 * oy + dy) * w + 2 * ox + dx) * c;
                    for ch in 0..c {
                        out[o + ch] += 0.25 * xd[i + ch];
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, t, oh, ow, c], out)
}

pub(crate) fn avg_pool2_backward(xshape: &[usize], g: &Tensor) -> Vec<f64> {
    let (n, t, h, w, c) = (xshape[0], xshape[1], xshape[2], xshape[3], xshape[4]);
    let (oh, ow) = (h / 2, w / 2);
    let mut gx = vec![0.0; n * t * h * w * c];
    let gd = g.data();
    for f in 0..n * t {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = ((f * oh + oy) * ow + ox) * c;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let i = ((f * h + 2 * oy + dy) * w + 2 * ox + dx) * c;
                    for ch in 0..c {
                        gx[i + ch] += 0.25 * gd[o + ch];
                    }
                }
            }
        }
    }
    gx
}

/// Mean over H and W: `[N,T,H,W,C] -> [N,T,C]`.
pub fn spatial_mean(x: &Tensor) -> Result<Tensor> {
    let [n, t, h, w, c] = dims5(x, "spatial_mean")?;
    let hw = h * w;
    let mut out = vec![0.0; n * t * c];
    for (f, frame) in x.data().chunks_exact(hw * c).enumerate() {
        let o = &mut out[f * c..(f + 1) * c];
        for px in frame.chunks_exact(c) {
            for (s, &v) in o.iter_mut().zip(px) {
                *s += v;
            }
        }
        for s in o.iter_mut() {
            *s /= hw as f64;
        }
    }
    Tensor::new(vec![n, t, c], out)
}

// ── temporal similarity ─────────────────────────────────────────────────

/// Frame index `t + offset`, clamped into `[0, len)`.
pub fn clamp_offset(t: usize, offset: isize, len: usize) -> usize {
    (t as isize + offset).clamp(0, len as isize - 1) as usize
}

fn cosine(u: &[f64], v: &[f64]) -> (f64, f64, f64, f64) {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let c = if nu == 0.0 || nv == 0.0 { 0.0 } else { dot / (nu * nv) };
    (c, dot, nu, nv)
}

/// Cosine similarity between each frame and its neighbours at the given
/// temporal offsets: `[N,T,D] -> [N,T,K]`. A zero vector has similarity 0.
pub fn cosine_window(x: &Tensor, offsets: &[isize]) -> Result<Tensor> {
    let [n, t, d] = dims3(x, "cosine_window")?;
    if offsets.is_empty() {
        return Err(Error::shape("cosine_window", "empty offset window"));
    }
    let k = offsets.len();
    let xd = x.data();
    let mut out = Vec::with_capacity(n * t * k);
    for ni in 0..n {
        for ti in 0..t {
            let u = &xd[(ni * t + ti) * d..(ni * t + ti + 1) * d];
            for &off in offsets {
                let tj = clamp_offset(ti, off, t);
                let v = &xd[(ni * t + tj) * d..(ni * t + tj + 1) * d];
                out.push(cosine(u, v).0);
            }
        }
    }
    Tensor::new(vec![n, t, k], out)
}

pub(crate) fn cosine_window_backward(x: &Tensor, offsets: &[isize], g: &Tensor) -> Vec<f64> {
    let [n, t, d] = dims3(x, "cosine_window").expect("checked in forward");
    let k = offsets.len();
    let xd = x.data();
    let gd = g.data();
    let mut gx = vec![0.0; xd.len()];
    for ni in 0..n {
        for ti in 0..t {
            let iu = (ni * t + ti) * d;
            for (j, &off) in offsets.iter().enumerate() {
                let gv = gd[(ni * t + ti) * k + j];
                let tj = clamp_offset(ti, off, t);
                let iv = (ni * t + tj) * d;
                let (c, _, nu, nv) = cosine(&xd[iu..iu + d], &xd[iv..iv + d]);
                if nu == 0.0 || nv == 0.0 || gv == 0.0 {
                    continue;
                }
                let inv_uv = 1.0 / (nu * nv);
                for e in 0..d {
                    let (ue, ve) = (xd[iu + e], xd[iv + e]);
                    gx[iu + e] += gv * (ve * inv_uv - c * ue / (nu * nu));
                    gx[iv + e] += gv * (ue * inv_uv - c * ve / (nv * nv));
                }
            }
        }
    }
    gx
}

// ── attention ───────────────────────────────────────────────────────────

/// Row-softmax of `q kᵀ / sqrt(D)`: `[N,T,D] x [N,T,D] -> [N,T,T]`.
pub fn attention_weights(q: &Tensor, k: &Tensor) -> Result<Tensor> {
    let [n, t, d] = dims3(q, "attention")?;
    if k.shape() != q.shape() {
        return Err(Error::shape("attention", format!("q {:?} vs k {:?}", q.shape(), k.shape())));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let (qd, kd) = (q.data(), k.data());
    let mut p = vec![0.0; n * t * t];
    for ni in 0..n {
        for i in 0..t {
            let qi = &qd[(ni * t + i) * d..(ni * t + i + 1) * d];
            let row = &mut p[(ni * t + i) * t..(ni * t + i + 1) * t];
            for (j, r) in row.iter_mut().enumerate() {
                let kj = &kd[(ni * t + j) * d..(ni * t + j + 1) * d];
                *r = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for r in row.iter_mut() {
                *r = (*r - m).exp();
                z += *r;
            }
            for r in row.iter_mut() {
                *r /= z;
            }
        }
    }
    Tensor::new(vec![n, t, t], p)
}

/// `softmax(q kᵀ / sqrt(D)) v`. Returns the output and the attention weights.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(Tensor, Tensor)> {
    let p = attention_weights(q, k)?;
    if v.shape() != q.shape() {
        return Err(Error::shape("attention", format!("q {:?} vs v {:?}", q.shape(), v.shape())));
    }
    let [n, t, d] = dims3(v, "attention")?;
    let (pd, vd) = (p.data(), v.data());
    let mut out = vec![0.0; n * t * d];
    for ni in 0..n {
        for i in 0..t {
            let o = &mut out[(ni * t + i) * d..(ni * t + i + 1) * d];
            for j in 0..t {
                let w = pd[(ni * t + i) * t + j];
                for (ov, &vv) in o.iter_mut().zip(&vd[(ni * t + j) * d..(ni * t + j + 1) * d]) {
                    *ov += w * vv;
                }
            }
        }
    }
    Ok((Tensor::new(vec![n, t, d], out)?, p))
}

pub(crate) fn attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    p: &Tensor,
    g: &Tensor,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let [n, t, d] = dims3(q, "attention").expect("checked in forward");
    let scale = 1.0 / (d as f64).sqrt();
    let (qd, kd, vd, pd, gd) = (q.data(), k.data(), v.data(), p.data(), g.data());
    let mut gq = vec![0.0; qd.len()];
    let mut gk = vec![0.0; kd.len()];
    let mut gv = vec![0.0; vd.len()];
    let mut dp = vec![0.0; t];
    for ni in 0..n {
        for i in 0..t {
            let gi = &gd[(ni * t + i) * d..(ni * t + i + 1) * d];
            let prow = &pd[(ni * t + i) * t..(ni * t + i + 1) * t];
            for j in 0..t {
                let vj = (ni * t + j) * d;
                dp[j] = gi.iter().zip(&vd[vj..vj + d]).map(|(a, b)| a * b).sum();
                for (gvv, &ge) in gv[vj..vj + d].iter_mut().zip(gi) {
                    *gvv += prow[j] * ge;
                }
            }
            let dot: f64 = prow.iter().zip(&dp).map(|(a, b)| a * b).sum();
            let qi = (ni * t + i) * d;
            for j in 0..t {
                let ds = prow[j] * (dp[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                let kj = (ni * t + j) * d;
                for e in 0..d {
                    gq[qi + e] += ds * kd[kj + e];
                    gk[kj + e] += ds * qd[qi + e];
                }
            }
        }
    }
    (gq, gk, gv)
}

// ── losses ──────────────────────────────────────────────────────────────

/// Weighted binary cross-entropy summed over all entries, with predictions
/// clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub fn bce_sum(p: &Tensor, target: &Tensor, weight: f64) -> Result<f64> {
    if p.shape() != target.shape() {
        return Err(Error::shape("bce", format!("{:?} vs {:?}", p.shape(), target.shape())));
    }
    let mut s = 0.0;
    for (&pv, &tv) in p.data().iter().zip(target.data()) {
        let pc = pv.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        s -= tv * pc.ln() + (1.0 - tv) * (1.0 - pc).ln();
    }
    Ok(weight * s)
}

pub(crate) fn bce_backward(p: &Tensor, target: &Tensor, weight: f64, g: f64) -> Vec<f64> {
    p.data()
        .iter()
        .zip(target.data())
        .map(|(&pv, &tv)| {
            if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&pv) {
                0.0
            } else {
                -g * weight * (tv / pv - (1.0 - tv) / (1.0 - pv))
            }
        })
        .collect()
}
