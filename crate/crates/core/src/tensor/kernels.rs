//! Raw forward/backward numeric kernels on flat row-major `f32` slices.
#![allow(clippy::too_many_arguments)] // flat kernels take their dims flat
//!
//! The convolution pair is implemented im2col-style so the inner loops are
//! plain matrix products. Convention throughout: cross-correlation (no kernel
//! flip), zero padding, `floor` output sizing.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `out += a @ b` with `a: m×k`, `b: k×n`, `out: m×n`.
pub fn matmul_acc(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
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

/// `out += a @ bᵀ` with `a: m×k`, `b: n×k`, `out: m×n`.
pub fn matmul_nt_acc(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut s = 0.0f32;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                s += av * bv;
            }
            out[i * n + j] += s;
        }
    }
}

/// `out += aᵀ @ b` with `a: k×m`, `b: k×n`, `out: m×n`.
pub fn matmul_tn_acc(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for l in 0..k {
        let a_row = &a[l * m..(l + 1) * m];
        let b_row = &b[l * n..(l + 1) * n];
        for (i, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// Spatial output size of a convolution along one axis.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

/// Unfolds one image `src: c×h×w` into patch columns
/// `dst: (c·kh·kw) × (oh·ow)`; out-of-bounds taps read as zero.
pub fn im2col(
    src: &[f32],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    dst: &mut [f32],
) {
    debug_assert_eq!(src.len(), c * h * w);
    debug_assert_eq!(dst.len(), c * kh * kw * oh * ow);
    dst.fill(0.0);
    let plane = h * w;
    let cols = oh * ow;
    for ci in 0..c {
        let img = &src[ci * plane..(ci + 1) * plane];
        for u in 0..kh {
            for t in 0..kw {
                let row = &mut dst[((ci * kh + u) * kw + t) * cols..((ci * kh + u) * kw + t + 1) * cols];
                for oy in 0..oh {
                    let y = (oy * stride + u) as isize - padding as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let src_row = &img[y as usize * w..(y as usize + 1) * w];
                    let dst_row = &mut row[oy * ow..(oy + 1) * ow];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let x = (ox * stride + t) as isize - padding as isize;
                        if x >= 0 && x < w as isize {
                            *d = src_row[x as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds patch columns back into `dst: c×h×w`.
pub fn col2im_acc(
    src: &[f32],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    dst: &mut [f32],
) {
    debug_assert_eq!(dst.len(), c * h * w);
    debug_assert_eq!(src.len(), c * kh * kw * oh * ow);
    let plane = h * w;
    let cols = oh * ow;
    for ci in 0..c {
        let img = &mut dst[ci * plane..(ci + 1) * plane];
        for u in 0..kh {
            for t in 0..kw {
                let row = &src[((ci * kh + u) * kw + t) * cols..((ci * kh + u) * kw + t + 1) * cols];
                for oy in 0..oh {
                    let y = (oy * stride + u) as isize - padding as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let dst_row = &mut img[y as usize * w..(y as usize + 1) * w];
                    let src_row = &row[oy * ow..(oy + 1) * ow];
                    for (ox, &s) in src_row.iter().enumerate() {
                        let x = (ox * stride + t) as isize - padding as isize;
                        if x >= 0 && x < w as isize {
                            dst_row[x as usize] += s;
                        }
                    }
                }
            }
        }
    }
}

/// Shape bundle for the convolution pair.
#[derive(Debug, Clone, Copy)]
pub struct ConvDims {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvDims {
    pub fn validate_conv(
        x_shape: &[usize],
        k_shape: &[usize],
        b_shape: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if x_shape.len() != 4 {
            return Err(Error::Shape(format!(
                "conv2d: input must be rank 4 [N,C,H,W], got {x_shape:?}"
            )));
        }
        if k_shape.len() != 4 {
            return Err(Error::Shape(format!(
                "conv2d: kernel must be rank 4 [Cout,Cin,kh,kw], got {k_shape:?}"
            )));
        }
        let (n, cin, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
        let (cout, kcin, kh, kw) = (k_shape[0], k_shape[1], k_shape[2], k_shape[3]);
        if kcin != cin {
            return Err(Error::Shape(format!(
                "conv2d: channel axis mismatch — input axis 1 has {cin}, kernel axis 1 expects {kcin}"
            )));
        }
        if b_shape != [cout] {
            return Err(Error::Shape(format!(
                "conv2d: bias axis 0 must equal Cout={cout}, got {b_shape:?}"
            )));
        }
        if stride < 1 {
            return Err(Error::InvalidArgument("conv2d: stride must be >= 1".into()));
        }
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(Error::Shape(format!(
                "conv2d: kernel {kh}x{kw} exceeds padded input {}x{} (spatial axes 2,3)",
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        Ok(ConvDims { n, cin, h, w, cout, kh, kw, stride, padding })
    }

    pub fn out_h(&self) -> usize {
        conv_out_dim(self.h, self.kh, self.stride, self.padding)
    }

    pub fn out_w(&self) -> usize {
        conv_out_dim(self.w, self.kw, self.stride, self.padding)
    }
}

/// Cross-correlation forward: `x: N×Cin×H×W`, `k: Cout×Cin×kh×kw`, `b: Cout`.
pub fn conv2d_forward(x: &[f32], k: &[f32], b: &[f32], d: &ConvDims) -> Vec<f32> {
    let (oh, ow) = (d.out_h(), d.out_w());
    let ckk = d.cin * d.kh * d.kw;
    let cols_len = oh * ow;
    let mut cols = vec![0.0f32; ckk * cols_len];
    let mut out = vec![0.0f32; d.n * d.cout * cols_len];
    for ni in 0..d.n {
        let img = &x[ni * d.cin * d.h * d.w..(ni + 1) * d.cin * d.h * d.w];
        im2col(img, d.cin, d.h, d.w, d.kh, d.kw, d.stride, d.padding, oh, ow, &mut cols);
        let out_n = &mut out[ni * d.cout * cols_len..(ni + 1) * d.cout * cols_len];
        for co in 0..d.cout {
            out_n[co * cols_len..(co + 1) * cols_len].fill(b[co]);
        }
        matmul_acc(k, &cols, d.cout, ckk, cols_len, out_n);
    }
    out
}

/// Gradients of [`conv2d_forward`] w.r.t. input, kernel and bias.
pub fn conv2d_backward(
    x: &[f32],
    k: &[f32],
    dout: &[f32],
    d: &ConvDims,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let (oh, ow) = (d.out_h(), d.out_w());
    let ckk = d.cin * d.kh * d.kw;
    let cols_len = oh * ow;
    let mut cols = vec![0.0f32; ckk * cols_len];
    let mut dcols = vec![0.0f32; ckk * cols_len];
    let mut dx = vec![0.0f32; x.len()];
    let mut dk = vec![0.0f32; k.len()];
    let mut db = vec![0.0f32; d.cout];
    for ni in 0..d.n {
        let img = &x[ni * d.cin * d.h * d.w..(ni + 1) * d.cin * d.h * d.w];
        let dout_n = &dout[ni * d.cout * cols_len..(ni + 1) * d.cout * cols_len];
        im2col(img, d.cin, d.h, d.w, d.kh, d.kw, d.stride, d.padding, oh, ow, &mut cols);
        // dk += dout_n @ colsᵀ
        matmul_nt_acc(dout_n, &cols, d.cout, cols_len, ckk, &mut dk);
        // dcols = kᵀ @ dout_n
        dcols.fill(0.0);
        matmul_tn_acc(k, dout_n, ckk, d.cout, cols_len, &mut dcols);
        let dx_n = &mut dx[ni * d.cin * d.h * d.w..(ni + 1) * d.cin * d.h * d.w];
        col2im_acc(&dcols, d.cin, d.h, d.w, d.kh, d.kw, d.stride, d.padding, oh, ow, dx_n);
        for co in 0..d.cout {
            db[co] += dout_n[co * cols_len..(co + 1) * cols_len].iter().sum::<f32>();
        }
    }
    (dx, dk, db)
}

/// Shape bundle for transpose convolution. Kernel layout is
/// `[Cin, Cout, kh, kw]` (dim 0 matches the op's own input channels), so the
/// same kernel tensor serves as the adjoint of a `conv2d` whose kernel is
/// `[Cout, Cin, kh, kw]`.
#[derive(Debug, Clone, Copy)]
pub struct TConvDims {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl TConvDims {
    pub fn validate(
        x_shape: &[usize],
        k_shape: &[usize],
        b_shape: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if x_shape.len() != 4 || k_shape.len() != 4 {
            return Err(Error::Shape(format!(
                "transpose_conv2d: input and kernel must be rank 4, got {x_shape:?} / {k_shape:?}"
            )));
        }
        let (n, cin, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
        let (kcin, cout, kh, kw) = (k_shape[0], k_shape[1], k_shape[2], k_shape[3]);
        if kcin != cin {
            return Err(Error::Shape(format!(
                "transpose_conv2d: channel axis mismatch — input axis 1 has {cin}, kernel axis 0 expects {kcin}"
            )));
        }
        if b_shape != [cout] {
            return Err(Error::Shape(format!(
                "transpose_conv2d: bias axis 0 must equal Cout={cout}, got {b_shape:?}"
            )));
        }
        if stride < 1 {
            return Err(Error::InvalidArgument(
                "transpose_conv2d: stride must be >= 1".into(),
            ));
        }
        let oh = (h - 1) * stride + kh;
        let ow = (w - 1) * stride + kw;
        if oh <= 2 * padding || ow <= 2 * padding {
            return Err(Error::Shape(format!(
                "transpose_conv2d: padding {padding} consumes the whole {oh}x{ow} unpadded output"
            )));
        }
        Ok(TConvDims { n, cin, h, w, cout, kh, kw, stride, padding })
    }

    pub fn out_h(&self) -> usize {
        (self.h - 1) * self.stride + self.kh - 2 * self.padding
    }

    pub fn out_w(&self) -> usize {
        (self.w - 1) * self.stride + self.kw - 2 * self.padding
    }
}

/// Transpose convolution forward (adjoint of `conv2d` w.r.t. its input).
pub fn transpose_conv2d_forward(x: &[f32], k: &[f32], b: &[f32], d: &TConvDims) -> Vec<f32> {
    let (oh, ow) = (d.out_h(), d.out_w());
    let ckk = d.cout * d.kh * d.kw;
    let positions = d.h * d.w;
    let mut cols = vec![0.0f32; ckk * positions];
    let mut out = vec![0.0f32; d.n * d.cout * oh * ow];
    for ni in 0..d.n {
        let x_n = &x[ni * d.cin * positions..(ni + 1) * d.cin * positions];
        // cols = kᵀ @ x_n, viewing k as Cin × (Cout·kh·kw)
        cols.fill(0.0);
        matmul_tn_acc(k, x_n, ckk, d.cin, positions, &mut cols);
        let out_n = &mut out[ni * d.cout * oh * ow..(ni + 1) * d.cout * oh * ow];
        col2im_acc(&cols, d.cout, oh, ow, d.kh, d.kw, d.stride, d.padding, d.h, d.w, out_n);
        for co in 0..d.cout {
            for v in &mut out_n[co * oh * ow..(co + 1) * oh * ow] {
                *v += b[co];
            }
        }
    }
    out
}

/// Gradients of [`transpose_conv2d_forward`] w.r.t. input, kernel and bias.
pub fn transpose_conv2d_backward(
    x: &[f32],
    k: &[f32],
    dout: &[f32],
    d: &TConvDims,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let (oh, ow) = (d.out_h(), d.out_w());
    let ckk = d.cout * d.kh * d.kw;
    let positions = d.h * d.w;
    let mut dcols = vec![0.0f32; ckk * positions];
    let mut dx = vec![0.0f32; x.len()];
    let mut dk = vec![0.0f32; k.len()];
    let mut db = vec![0.0f32; d.cout];
    for ni in 0..d.n {
        let x_n = &x[ni * d.cin * positions..(ni + 1) * d.cin * positions];
        let dout_n = &dout[ni * d.cout * oh * ow..(ni + 1) * d.cout * oh * ow];
        im2col(dout_n, d.cout, oh, ow, d.kh, d.kw, d.stride, d.padding, d.h, d.w, &mut dcols);
        // dx_n += k @ dcols
        let dx_n = &mut dx[ni * d.cin * positions..(ni + 1) * d.cin * positions];
        matmul_acc(k, &dcols, d.cin, ckk, positions, dx_n);
        // dk += x_n @ dcolsᵀ
        matmul_nt_acc(x_n, &dcols, d.cin, positions, ckk, &mut dk);
        for co in 0..d.cout {
            db[co] += dout_n[co * oh * ow..(co + 1) * oh * ow].iter().sum::<f32>();
        }
    }
    (dx, dk, db)
}

/// Max pooling forward. Returns pooled values and, per output cell, the flat
/// `y*W + x` index of its argmax inside the input plane (ties break to the
/// first element in row-major scan order).
pub fn max_pool2d_forward(
    x: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    window: usize,
    stride: usize,
) -> Result<(Vec<f32>, Vec<u32>)> {
    if window > h || window > w {
        return Err(Error::Shape(format!(
            "max_pool2d: window {window} exceeds spatial axes {h}x{w}"
        )));
    }
    if stride < 1 {
        return Err(Error::InvalidArgument("max_pool2d: stride must be >= 1".into()));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let mut out = vec![0.0f32; n * c * oh * ow];
    let mut arg = vec![0u32; n * c * oh * ow];
    for plane_idx in 0..n * c {
        let img = &x[plane_idx * h * w..(plane_idx + 1) * h * w];
        let out_p = &mut out[plane_idx * oh * ow..(plane_idx + 1) * oh * ow];
        let arg_p = &mut arg[plane_idx * oh * ow..(plane_idx + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f32::NEG_INFINITY;
                let mut best_idx = 0u32;
                for u in 0..window {
                    let y = oy * stride + u;
                    for t in 0..window {
                        let xx = ox * stride + t;
                        let v = img[y * w + xx];
                        if v > best {
                            best = v;
                            best_idx = (y * w + xx) as u32;
                        }
                    }
                }
                out_p[oy * ow + ox] = best;
                arg_p[oy * ow + ox] = best_idx;
            }
        }
    }
    Ok((out, arg))
}

/// Routes pooled gradients back to the stored argmax positions.
pub fn max_pool2d_backward(
    dout: &[f32],
    arg: &[u32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Vec<f32> {
    let per_plane = dout.len() / (n * c);
    let mut dx = vec![0.0f32; n * c * h * w];
    for plane_idx in 0..n * c {
        let dx_p = &mut dx[plane_idx * h * w..(plane_idx + 1) * h * w];
        let dout_p = &dout[plane_idx * per_plane..(plane_idx + 1) * per_plane];
        let arg_p = &arg[plane_idx * per_plane..(plane_idx + 1) * per_plane];
        for (g, &a) in dout_p.iter().zip(arg_p) {
            dx_p[a as usize] += g;
        }
    }
    dx
}

/// Per-channel batch statistics saved by the training-mode forward.
#[derive(Debug, Clone)]
pub struct BnSaved {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub inv_std: Vec<f32>,
}

/// Training-mode batch norm: normalizes by per-channel batch statistics
/// (population variance over N·H·W elements).
pub fn batch_norm2d_train_forward(
    x: &[f32],
    gamma: &[f32],
    beta: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    eps: f32,
) -> Result<(Vec<f32>, BnSaved)> {
    let m = n * h * w;
    if m < 2 {
        return Err(Error::DegenerateBatch(format!(
            "batch_norm2d training mode needs N*H*W >= 2, got {m}"
        )));
    }
    let plane = h * w;
    let mut mean = vec![0.0f32; c];
    let mut var = vec![0.0f32; c];
    for ci in 0..c {
        let mut s = 0.0f64;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for &v in &x[base..base + plane] {
                s += v as f64;
            }
        }
        mean[ci] = (s / m as f64) as f32;
        let mu = mean[ci] as f64;
        let mut sv = 0.0f64;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for &v in &x[base..base + plane] {
                let d = v as f64 - mu;
                sv += d * d;
            }
        }
        var[ci] = (sv / m as f64) as f32;
    }
    let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
    let mut out = vec![0.0f32; x.len()];
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * plane;
            let (mu, is, g, b) = (mean[ci], inv_std[ci], gamma[ci], beta[ci]);
            for i in 0..plane {
                out[base + i] = g * (x[base + i] - mu) * is + b;
            }
        }
    }
    Ok((out, BnSaved { mean, var, inv_std }))
}

/// Gradients of the training-mode batch norm w.r.t. input, gamma and beta.
pub fn batch_norm2d_train_backward(
    x: &[f32],
    gamma: &[f32],
    dout: &[f32],
    saved: &BnSaved,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let plane = h * w;
    let m = (n * plane) as f32;
    let mut dx = vec![0.0f32; x.len()];
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    for ci in 0..c {
        let (mu, is) = (saved.mean[ci], saved.inv_std[ci]);
        let mut sum_dy = 0.0f64;
        let mut sum_dy_xhat = 0.0f64;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for i in 0..plane {
                let xhat = (x[base + i] - mu) * is;
                let dy = dout[base + i];
                sum_dy += dy as f64;
                sum_dy_xhat += (dy * xhat) as f64;
            }
        }
        dbeta[ci] = sum_dy as f32;
        dgamma[ci] = sum_dy_xhat as f32;
        let mean_dy = (sum_dy / m as f64) as f32;
        let mean_dy_xhat = (sum_dy_xhat / m as f64) as f32;
        let scale = gamma[ci] * is;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for i in 0..plane {
                let xhat = (x[base + i] - mu) * is;
                dx[base + i] = scale * (dout[base + i] - mean_dy - xhat * mean_dy_xhat);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Eval-mode batch norm: per-channel affine transform with frozen statistics.
pub fn batch_norm2d_eval_forward(
    x: &[f32],
    gamma: &[f32],
    beta: &[f32],
    mean: &[f32],
    var: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    eps: f32,
) -> Vec<f32> {
    let plane = h * w;
    let mut out = vec![0.0f32; x.len()];
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * plane;
            let is = 1.0 / (var[ci] + eps).sqrt();
            let (mu, g, b) = (mean[ci], gamma[ci], beta[ci]);
            for i in 0..plane {
                out[base + i] = g * (x[base + i] - mu) * is + b;
            }
        }
    }
    out
}

/// Gradients of the eval-mode batch norm w.r.t. input, gamma and beta.
pub fn batch_norm2d_eval_backward(
    x: &[f32],
    gamma: &[f32],
    mean: &[f32],
    var: &[f32],
    dout: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    eps: f32,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let plane = h * w;
    let mut dx = vec![0.0f32; x.len()];
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    for ci in 0..c {
        let is = 1.0 / (var[ci] + eps).sqrt();
        let mu = mean[ci];
        let scale = gamma[ci] * is;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for i in 0..plane {
                let dy = dout[base + i];
                dx[base + i] = dy * scale;
                dgamma[ci] += dy * (x[base + i] - mu) * is;
                dbeta[ci] += dy;
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Affine map `y = x @ wᵀ + b` with `x: N×Din`, `w: Dout×Din`.
pub fn dense_forward(x: &[f32], w: &[f32], b: &[f32], n: usize, din: usize, dout: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; n * dout];
    for ni in 0..n {
        out[ni * dout..(ni + 1) * dout].copy_from_slice(b);
    }
    matmul_nt_acc(x, w, n, din, dout, &mut out);
    out
}

/// Gradients of [`dense_forward`] w.r.t. input, weight and bias.
pub fn dense_backward(
    x: &[f32],
    w: &[f32],
    dout: &[f32],
    n: usize,
    din: usize,
    dout_dim: usize,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let mut dx = vec![0.0f32; n * din];
    let mut dw = vec![0.0f32; dout_dim * din];
    let mut db = vec![0.0f32; dout_dim];
    // dx = dout @ w
    matmul_acc(dout, w, n, dout_dim, din, &mut dx);
    // dw = doutᵀ @ x
    matmul_tn_acc(dout, x, dout_dim, n, din, &mut dw);
    for ni in 0..n {
        for j in 0..dout_dim {
            db[j] += dout[ni * dout_dim + j];
        }
    }
    (dx, dw, db)
}

pub fn relu_forward(x: &[f32]) -> Vec<f32> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Subgradient 0 at the kink.
pub fn relu_backward(x: &[f32], dout: &[f32]) -> Vec<f32> {
    x.iter()
        .zip(dout)
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect()
}

pub fn sigmoid_forward(x: &[f32]) -> Vec<f32> {
    x.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect()
}

pub fn sigmoid_backward(y: &[f32], dout: &[f32]) -> Vec<f32> {
    y.iter().zip(dout).map(|(&y, &g)| g * y * (1.0 - y)).collect()
}

/// Inverted-dropout mask: each element is 0 with probability `p`, otherwise
/// `1/(1-p)`. The mask is a pure function of the seed.
pub fn dropout_mask(len: usize, p: f32, seed: u64) -> Result<Vec<f32>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "dropout probability must be in [0,1), got {p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - p);
    Ok((0..len)
        .map(|_| if rng.random::<f32>() < p { 0.0 } else { keep })
        .collect())
}

/// Mean over the batch of `−log softmax(logits)[label]`, max-stabilized.
/// Returns the loss and the row-wise softmax (saved for the backward pass).
pub fn softmax_cross_entropy_forward(
    logits: &[f32],
    labels: &[usize],
    n: usize,
    k: usize,
) -> Result<(f32, Vec<f32>)> {
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "softmax_cross_entropy: {} labels for batch axis of {n}",
            labels.len()
        )));
    }
    let mut probs = vec![0.0f32; n * k];
    let mut total = 0.0f64;
    for ni in 0..n {
        let label = labels[ni];
        if label >= k {
            return Err(Error::Range(format!(
                "softmax_cross_entropy: label {label} out of range for {k} classes"
            )));
        }
        let row = &logits[ni * k..(ni + 1) * k];
        let maxv = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut denom = 0.0f64;
        for &v in row {
            denom += ((v - maxv) as f64).exp();
        }
        let log_denom = denom.ln();
        total += -((row[label] - maxv) as f64) + log_denom;
        let p_row = &mut probs[ni * k..(ni + 1) * k];
        for (pv, &v) in p_row.iter_mut().zip(row) {
            *pv = (((v - maxv) as f64).exp() / denom) as f32;
        }
    }
    Ok(((total / n as f64) as f32, probs))
}

/// Gradient `(softmax − onehot)/N`, scaled by the upstream scalar.
pub fn softmax_cross_entropy_backward(
    probs: &[f32],
    labels: &[usize],
    n: usize,
    k: usize,
    upstream: f32,
) -> Vec<f32> {
    let mut dx = probs.to_vec();
    let scale = upstream / n as f32;
    for ni in 0..n {
        dx[ni * k + labels[ni]] -= 1.0;
        for v in &mut dx[ni * k..(ni + 1) * k] {
            *v *= scale;
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel_passes_input_through() {
        let x: Vec<f32> = (0..9).map(|v| v as f32).collect();
        let d = ConvDims::validate_conv(&[1, 1, 3, 3], &[1, 1, 1, 1], &[1], 1, 0).unwrap();
        let out = conv2d_forward(&x, &[1.0], &[0.0], &d);
        assert_eq!(out, x);
    }

    #[test]
    fn conv_zero_input_yields_bias() {
        let d = ConvDims::validate_conv(&[1, 1, 4, 4], &[2, 1, 3, 3], &[2], 1, 0).unwrap();
        let zeros = vec![0.0; 16];
        let halves = vec![0.5; 18];
        let out = conv2d_forward(&zeros, &halves, &[1.5, -2.0], &d);
        assert_eq!(out.len(), 2 * 2 * 2);
        assert!(out[..4].iter().all(|&v| v == 1.5));
        assert!(out[4..].iter().all(|&v| v == -2.0));
    }

    #[test]
    fn conv_hand_expanded_2x2_kernel() {
        // [[1,2,3],[4,5,6],[7,8,9]] * [[1,0],[0,1]] -> [[6,8],[12,14]]
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let k = vec![1.0, 0.0, 0.0, 1.0];
        let d = ConvDims::validate_conv(&[1, 1, 3, 3], &[1, 1, 2, 2], &[1], 1, 0).unwrap();
        let out = conv2d_forward(&x, &k, &[0.0], &d);
        assert_eq!(out, vec![6.0, 8.0, 12.0, 14.0]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let err = ConvDims::validate_conv(&[1, 2, 3, 3], &[1, 1, 2, 2], &[1], 1, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("axis"), "message should name the axis: {msg}");
    }

    #[test]
    fn tconv_single_pixel_broadcasts_kernel() {
        let k = vec![1.0, 2.0, 3.0, 4.0];
        let d = TConvDims::validate(&[1, 1, 1, 1], &[1, 1, 2, 2], &[1], 1, 0).unwrap();
        let out = transpose_conv2d_forward(&[2.5], &k, &[0.0], &d);
        assert_eq!(out, vec![2.5, 5.0, 7.5, 10.0]);
    }

    #[test]
    fn tconv_stride_two_tiles_blocks() {
        // 2x2 input, 2x2 ones kernel, stride 2 -> each input value fills a 2x2 block.
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let k = vec![1.0; 4];
        let d = TConvDims::validate(&[1, 1, 2, 2], &[1, 1, 2, 2], &[1], 2, 0).unwrap();
        let out = transpose_conv2d_forward(&x, &k, &[0.0], &d);
        #[rustfmt::skip]
        let expected = vec![
            1.0, 1.0, 2.0, 2.0,
            1.0, 1.0, 2.0, 2.0,
            3.0, 3.0, 4.0, 4.0,
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(out, expected);
    }

    #[test]
    fn tconv_is_adjoint_of_conv() {
        // ⟨conv2d(x,k), y⟩ == ⟨x, transpose_conv2d(y,k)⟩ for matching
        // stride/padding, sharing the same kernel tensor.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(424);
        // Kernel sizes chosen so (H + 2p − k) divides the stride exactly;
        // otherwise conv discards trailing rows and the sizes cannot match.
        for (stride, padding, kk) in [(1usize, 0usize, 3usize), (1, 1, 3), (2, 0, 4), (2, 1, 4)] {
            let (n, cin, hh, ww, cout) = (2, 3, 6, 6, 4);
            let x: Vec<f32> = (0..n * cin * hh * ww).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let k: Vec<f32> = (0..cout * cin * kk * kk).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let cd = ConvDims::validate_conv(&[n, cin, hh, ww], &[cout, cin, kk, kk], &[cout], stride, padding)
                .unwrap();
            let (oh, ow) = (cd.out_h(), cd.out_w());
            let y: Vec<f32> = (0..n * cout * oh * ow).map(|_| rng.random_range(-1.0f32..1.0)).collect();

            let conv_x = conv2d_forward(&x, &k, &vec![0.0; cout], &cd);
            let td = TConvDims::validate(&[n, cout, oh, ow], &[cout, cin, kk, kk], &[cin], stride, padding)
                .unwrap();
            let tconv_y = transpose_conv2d_forward(&y, &k, &vec![0.0; cin], &td);
            assert_eq!(tconv_y.len(), x.len());

            let dot = |a: &[f32], b: &[f32]| -> f64 {
                a.iter().zip(b).map(|(&p, &q)| p as f64 * q as f64).sum()
            };
            let lhs = dot(&conv_x, &y);
            let rhs = dot(&x, &tconv_y);
            let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12);
            assert!(rel < 1e-4, "stride {stride} pad {padding}: ⟨conv x, y⟩={lhs} vs ⟨x, tconv y⟩={rhs}");
        }
    }

    #[test]
    fn maxpool_examples() {
        let (out, _) = max_pool2d_forward(&[1.0, 2.0, 3.0, 4.0], 1, 1, 2, 2, 2, 2).unwrap();
        assert_eq!(out, vec![4.0]);

        let ramp: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let (out, arg) = max_pool2d_forward(&ramp, 1, 1, 4, 4, 2, 2).unwrap();
        assert_eq!(out, vec![5.0, 7.0, 13.0, 15.0]);
        assert_eq!(arg, vec![5, 7, 13, 15]);

        let (out, _) = max_pool2d_forward(&[3.0; 9], 1, 1, 3, 3, 2, 1).unwrap();
        assert!(out.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn maxpool_ties_take_first_in_row_major_order() {
        let (_, arg) = max_pool2d_forward(&[7.0, 7.0, 7.0, 7.0], 1, 1, 2, 2, 2, 1).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn maxpool_window_too_large_errors() {
        assert!(max_pool2d_forward(&[1.0, 2.0], 1, 1, 1, 2, 3, 1).is_err());
    }

    #[test]
    fn batchnorm_two_values_normalize_to_unit() {
        let (out, _) =
            batch_norm2d_train_forward(&[1.0, 3.0], &[1.0], &[0.0], 2, 1, 1, 1, 0.0).unwrap();
        assert!((out[0] + 1.0).abs() < 1e-6 && (out[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn batchnorm_standardized_input_passes_through() {
        // gamma=1, beta=0 on per-channel standardized input ≈ identity.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (n, c, hh, ww) = (4, 2, 3, 3);
        let mut x: Vec<f32> = (0..n * c * hh * ww).map(|_| rng.random_range(-2.0f32..2.0)).collect();
        let plane = hh * ww;
        let m = (n * plane) as f64;
        for ci in 0..c {
            let vals: Vec<f64> = (0..n)
                .flat_map(|ni| x[(ni * c + ci) * plane..(ni * c + ci + 1) * plane].to_vec())
                .map(|v| v as f64)
                .collect();
            let mean = vals.iter().sum::<f64>() / m;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            let std = var.sqrt();
            for ni in 0..n {
                for v in &mut x[(ni * c + ci) * plane..(ni * c + ci + 1) * plane] {
                    *v = ((*v as f64 - mean) / std) as f32;
                }
            }
        }
        let (out, _) =
            batch_norm2d_train_forward(&x, &[1.0; 2], &[0.0; 2], n, c, hh, ww, 0.0).unwrap();
        for (a, b) in out.iter().zip(&x) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn batchnorm_gamma_zero_yields_beta() {
        let x = vec![0.3, -1.0, 2.0, 0.7];
        let (out, _) =
            batch_norm2d_train_forward(&x, &[0.0], &[5.0], 1, 1, 2, 2, 1e-5).unwrap();
        assert!(out.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn batchnorm_degenerate_batch_errors() {
        assert!(batch_norm2d_train_forward(&[1.0], &[1.0], &[0.0], 1, 1, 1, 1, 1e-5).is_err());
    }

    #[test]
    fn dense_hand_example() {
        // x=[1,2], W=[[1,1],[0,1]], b=[0,1] -> [3,3]
        let out = dense_forward(&[1.0, 2.0], &[1.0, 1.0, 0.0, 1.0], &[0.0, 1.0], 1, 2, 2);
        assert_eq!(out, vec![3.0, 3.0]);
    }

    #[test]
    fn dense_identity_and_zero_weight() {
        let x = vec![1.0, -2.0, 3.0, 4.0];
        let eye = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(dense_forward(&x, &eye, &[0.0, 0.0], 2, 2, 2), x);
        let out = dense_forward(&x, &[0.0; 4], &[7.0, -1.0], 2, 2, 2);
        assert_eq!(out, vec![7.0, -1.0, 7.0, -1.0]);
    }

    #[test]
    fn relu_clamps_negatives() {
        assert_eq!(relu_forward(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn dropout_mask_is_seed_deterministic() {
        let a = dropout_mask(128, 0.5, 42).unwrap();
        let b = dropout_mask(128, 0.5, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.contains(&0.0) && a.contains(&2.0));
        assert!(dropout_mask(4, 1.0, 0).is_err());
        assert!(dropout_mask(4, -0.1, 0).is_err());
        assert!(dropout_mask(4, 0.0, 0).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln2() {
        let (loss, _) = softmax_cross_entropy_forward(&[0.0, 0.0], &[1], 1, 2).unwrap();
        assert!((loss - std::f32::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_confident_margin_is_tiny() {
        let (loss, _) = softmax_cross_entropy_forward(&[50.0, 0.0], &[0], 1, 2).unwrap();
        assert!(loss < 1e-9);
    }

    #[test]
    fn cross_entropy_hand_value() {
        // logits [1,2], label 0 -> ln(1+e) = 1.3133
        let (loss, _) = softmax_cross_entropy_forward(&[1.0, 2.0], &[0], 1, 2).unwrap();
        assert!((loss - 1.3132617).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        assert!(softmax_cross_entropy_forward(&[0.0, 0.0], &[2], 1, 2).is_err());
    }

    #[test]
    fn cross_entropy_grad_rows_sum_to_zero() {
        let logits = vec![0.3, -1.2, 0.8, 2.0, 0.1, -0.4];
        let (_, probs) = softmax_cross_entropy_forward(&logits, &[2, 0], 2, 3).unwrap();
        let grad = softmax_cross_entropy_backward(&probs, &[2, 0], 2, 3, 1.0);
        for row in grad.chunks(3) {
            assert!(row.iter().sum::<f32>().abs() < 1e-6);
        }
    }
}
