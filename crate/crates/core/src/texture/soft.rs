//! Differentiable GLCM loss via soft level assignment.
//!
//! Hard quantization is piecewise constant, so the trainable variant replaces
//! it with per-pixel soft weights `w_k(v) ∝ exp(−((v·(G−1))−k)²/τ)`
//! (normalized over k, max-stabilized). Soft joint counts are sums of
//! `w_i(base)·w_j(partner)` over pixel pairs; the rest of the feature
//! pipeline is unchanged. The batch maximum is exact — its subgradient
//! routes to the argmax row only.
//!
//! Backward chain, derived by hand for the argmax image only:
//!
//! ```text
//! dL/dP        per-feature closed forms (see feature_grad_p)
//! dL/dC        = dL/dP / npairs
//! dL/dw[p][i] += Σ_j dL/dC[i][j]·w[q][j]   (and symmetrically for q)
//! dL/ds[p]     = Σ_k dL/dw[p][k]·w[p][k]·(t_k − t̄),  t_k = −2(s−k)/τ
//! dL/dv[p]     = dL/ds[p]·(G−1)
//! ```
//!
//! For Correlation, with marginal means μ and variances σ² of P:
//!
//! ```text
//! dc/dP[a][b] = (a−μi)(b−μj)/(σiσj) − c·((a−μi)²/(2σi²) + (b−μj)²/(2σj²))
//! ```

use super::{
    grayscale_batch, GlcmOffset, GRAYSCALE_LUMA, N_FEATURES, ORIENTATIONS_DEG, SOT_WIDTH,
};
use crate::error::{Error, Result};
use crate::tensor::{FusedCtx, FusedOp, Graph, NodeId, Tensor};

/// Variance floor below which a soft marginal is treated as constant
/// (Correlation := 1, zero gradient), mirroring the hard-path definition.
const DEGENERATE_VAR: f64 = 1e-20;

#[derive(Debug, Clone, Copy)]
pub struct SoftGlcmCfg {
    pub levels: usize,
    pub distance: usize,
    pub tau: f32,
}

impl SoftGlcmCfg {
    pub fn new(levels: usize, distance: usize, tau: f32) -> Self {
        SoftGlcmCfg { levels, distance, tau }
    }

    fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "soft GLCM temperature must be > 0, got {}",
                self.tau
            )));
        }
        if !(2..=256).contains(&self.levels) {
            return Err(Error::InvalidArgument(format!(
                "soft GLCM gray levels must be in [2,256], got {}",
                self.levels
            )));
        }
        Ok(())
    }
}

/// Normalized soft level weights, `pixels.len() × G` row-major.
fn soft_weights(pixels: &[f32], g: usize, tau: f32) -> Vec<f32> {
    let span = (g - 1) as f32;
    let mut w = vec![0.0f32; pixels.len() * g];
    for (p, &v) in pixels.iter().enumerate() {
        let s = v * span;
        let row = &mut w[p * g..(p + 1) * g];
        let mut min_d = f32::INFINITY;
        for (k, slot) in row.iter_mut().enumerate() {
            let d = (s - k as f32) * (s - k as f32);
            *slot = d;
            min_d = min_d.min(d);
        }
        let mut total = 0.0f32;
        for slot in row.iter_mut() {
            *slot = (-(*slot - min_d) / tau).exp();
            total += *slot;
        }
        let inv = 1.0 / total;
        for item in row {
            *item *= inv;
        }
    }
    w
}

/// In-bounds pair iteration bounds for an offset; errors when no pairs exist.
fn pair_bounds(h: usize, w: usize, offset: GlcmOffset) -> Result<(i32, i32, i32, i32)> {
    let (hi, wi) = (h as i32, w as i32);
    if offset.dx.abs() >= wi || offset.dy.abs() >= hi || (offset.dx == 0 && offset.dy == 0) {
        return Err(Error::DegenerateGlcm(format!(
            "offset ({}, {}) admits no pixel pairs in a {h}x{w} image",
            offset.dx, offset.dy
        )));
    }
    Ok((
        (-offset.dy).max(0),
        (hi - offset.dy).min(hi),
        (-offset.dx).max(0),
        (wi - offset.dx).min(wi),
    ))
}

/// Soft joint counts for one image/offset. Returns `(C, npairs)` where
/// `sum(C) == npairs` up to rounding (weights are normalized per pixel).
fn soft_counts(
    weights: &[f32],
    h: usize,
    w: usize,
    g: usize,
    offset: GlcmOffset,
) -> Result<(Vec<f32>, f64)> {
    let (r0, r1, c0, c1) = pair_bounds(h, w, offset)?;
    let mut counts = vec![0.0f32; g * g];
    for r in r0..r1 {
        for c in c0..c1 {
            let p = (r * w as i32 + c) as usize;
            let q = ((r + offset.dy) * w as i32 + (c + offset.dx)) as usize;
            let wp = &weights[p * g..(p + 1) * g];
            let wq = &weights[q * g..(q + 1) * g];
            for (i, &wpi) in wp.iter().enumerate() {
                if wpi == 0.0 {
                    continue;
                }
                let row = &mut counts[i * g..(i + 1) * g];
                for (slot, &wqj) in row.iter_mut().zip(wq) {
                    *slot += wpi * wqj;
                }
            }
        }
    }
    let npairs = ((r1 - r0) as f64) * ((c1 - c0) as f64);
    Ok((counts, npairs))
}

/// Marginal statistics of a normalized G×G matrix.
struct Marginals {
    mu_i: f64,
    mu_j: f64,
    var_i: f64,
    var_j: f64,
}

fn marginals(p: &[f32], g: usize) -> Marginals {
    let mut row = vec![0.0f64; g];
    let mut col = vec![0.0f64; g];
    for i in 0..g {
        for j in 0..g {
            let v = p[i * g + j] as f64;
            row[i] += v;
            col[j] += v;
        }
    }
    let mean = |m: &[f64]| m.iter().enumerate().map(|(i, &v)| i as f64 * v).sum::<f64>();
    let mu_i = mean(&row);
    let mu_j = mean(&col);
    let var = |m: &[f64], mu: f64| {
        m.iter()
            .enumerate()
            .map(|(i, &v)| (i as f64 - mu) * (i as f64 - mu) * v)
            .sum::<f64>()
    };
    Marginals { mu_i, mu_j, var_i: var(&row, mu_i), var_j: var(&col, mu_j) }
}

/// Normalized soft feature quintet of one normalized soft GLCM
/// (same feature order and \[0,1] rescaling as the hard path, unclamped).
fn soft_feature_quintet(p: &[f32], g: usize) -> [f32; N_FEATURES] {
    let span = (g - 1) as f64;
    let mut asm = 0.0f64;
    let mut contrast = 0.0f64;
    let mut homogeneity = 0.0f64;
    let mut dissimilarity = 0.0f64;
    for i in 0..g {
        for j in 0..g {
            let v = p[i * g + j] as f64;
            let d = i as f64 - j as f64;
            asm += v * v;
            contrast += d * d * v;
            homogeneity += v / ((1.0 + d.abs()) * (1.0 + d.abs()));
            dissimilarity += d.abs() * v;
        }
    }
    let m = marginals(p, g);
    let correlation = if m.var_i * m.var_j <= DEGENERATE_VAR {
        1.0
    } else {
        let denom = (m.var_i * m.var_j).sqrt();
        let mut num = 0.0f64;
        for i in 0..g {
            for j in 0..g {
                num += (i as f64 - m.mu_i) * (j as f64 - m.mu_j) * p[i * g + j] as f64;
            }
        }
        num / denom
    };
    [
        asm as f32,
        (contrast / (span * span)) as f32,
        homogeneity as f32,
        ((correlation + 1.0) / 2.0) as f32,
        (dissimilarity / span) as f32,
    ]
}

/// Soft feature rows (m × 40) for a flat batch of single-channel images.
pub fn soft_sot_rows(
    batch: &[f32],
    m: usize,
    h: usize,
    w: usize,
    cfg: &SoftGlcmCfg,
) -> Result<Vec<f32>> {
    cfg.validate()?;
    if batch.len() != m * h * w {
        return Err(Error::Shape(format!(
            "soft_sot_rows: batch of {} values does not hold {m} images of {h}x{w}",
            batch.len()
        )));
    }
    let g = cfg.levels;
    let mut rows = vec![0.0f32; m * SOT_WIDTH];
    for img in 0..m {
        let pixels = &batch[img * h * w..(img + 1) * h * w];
        for &v in pixels {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Range(format!(
                    "soft_sot_rows: pixel value {v} outside [0,1]"
                )));
            }
        }
        let weights = soft_weights(pixels, g, cfg.tau);
        let row = &mut rows[img * SOT_WIDTH..(img + 1) * SOT_WIDTH];
        for (oi, offset) in GlcmOffset::ring(cfg.distance).iter().enumerate() {
            let (counts, npairs) = soft_counts(&weights, h, w, g, *offset)?;
            let inv = (1.0 / npairs) as f32;
            let p: Vec<f32> = counts.iter().map(|&c| c * inv).collect();
            let feats = soft_feature_quintet(&p, g);
            for (fi, &f) in feats.iter().enumerate() {
                row[fi * ORIENTATIONS_DEG.len() + oi] = f;
            }
        }
    }
    Ok(rows)
}

fn row_distances(rows: &[f32], target: &[f32], m: usize) -> (Vec<f32>, usize, f32) {
    let mut dists = Vec::with_capacity(m);
    let mut best = f32::NEG_INFINITY;
    let mut argmax = 0;
    for i in 0..m {
        let d: f32 = rows[i * SOT_WIDTH..(i + 1) * SOT_WIDTH]
            .iter()
            .zip(&target[i * SOT_WIDTH..(i + 1) * SOT_WIDTH])
            .map(|(a, b)| (a - b).abs())
            .sum();
        if d > best {
            best = d;
            argmax = i;
        }
        dists.push(d);
    }
    (dists, argmax, best)
}

/// Pure (non-graph) soft GLCM loss: both sides run the soft pipeline, so
/// identical inputs give exactly zero.
pub fn soft_glcm_loss(colorized: &Tensor, original: &Tensor, cfg: &SoftGlcmCfg) -> Result<f32> {
    let os = original.shape();
    if os.len() != 4 || os[1] != 1 {
        return Err(Error::Shape(format!(
            "soft_glcm_loss: original must be [N,1,H,W], got {os:?}"
        )));
    }
    let gray = grayscale_batch(colorized)?;
    if gray.shape() != os {
        return Err(Error::Shape(format!(
            "soft_glcm_loss: batch axes differ — colorized {:?} vs original {os:?}",
            colorized.shape()
        )));
    }
    let (m, h, w) = (os[0], os[2], os[3]);
    let rows = soft_sot_rows(gray.data(), m, h, w, cfg)?;
    let target = soft_sot_rows(original.data(), m, h, w, cfg)?;
    Ok(row_distances(&rows, &target, m).2)
}

/// Records the soft GLCM loss on the tape: grayscale conversion as a primitive
/// node, then one fused node whose backward is the hand-derived chain above.
/// Gradient flows to `colorized` only; `original` is the fixed target.
pub fn soft_glcm_loss_node(
    graph: &mut Graph,
    colorized: NodeId,
    original: &Tensor,
    cfg: &SoftGlcmCfg,
) -> Result<NodeId> {
    cfg.validate()?;
    let os = original.shape().to_vec();
    if os.len() != 4 || os[1] != 1 {
        return Err(Error::Shape(format!(
            "soft_glcm_loss: original must be [N,1,H,W], got {os:?}"
        )));
    }
    let cs = graph.shape(colorized).to_vec();
    if cs.len() != 4 || cs[1] != 3 || cs[0] != os[0] || cs[2] != os[2] || cs[3] != os[3] {
        return Err(Error::Shape(format!(
            "soft_glcm_loss: colorized {cs:?} does not match original {os:?} (3-channel, same batch and size)"
        )));
    }
    let (m, h, w) = (os[0], os[2], os[3]);
    let gray = graph.channel_weighted_sum(colorized, &GRAYSCALE_LUMA)?;
    let rows = soft_sot_rows(graph.value(gray), m, h, w, cfg)?;
    let target = soft_sot_rows(original.data(), m, h, w, cfg)?;
    let (_, argmax, loss) = row_distances(&rows, &target, m);
    let mut signs = [0.0f32; SOT_WIDTH];
    for j in 0..SOT_WIDTH {
        let d = rows[argmax * SOT_WIDTH + j] - target[argmax * SOT_WIDTH + j];
        signs[j] = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    let op = SoftGlcmLossOp { cfg: *cfg, m, h, w, argmax, signs };
    Ok(graph.push_custom(&[gray], vec![loss], &[], Box::new(op)))
}

#[derive(Debug)]
struct SoftGlcmLossOp {
    cfg: SoftGlcmCfg,
    m: usize,
    h: usize,
    w: usize,
    argmax: usize,
    signs: [f32; SOT_WIDTH],
}

impl SoftGlcmLossOp {
    /// dL/dP for one orientation, folding in the per-feature |·| signs and
    /// the \[0,1] rescaling factors.
    fn feature_grad_p(&self, p: &[f32], oi: usize) -> Vec<f64> {
        let g = self.cfg.levels;
        let span = (g - 1) as f64;
        let n_orient = ORIENTATIONS_DEG.len();
        let s_asm = self.signs[oi] as f64;
        let s_con = self.signs[n_orient + oi] as f64 / (span * span);
        let s_hom = self.signs[2 * n_orient + oi] as f64;
        let s_cor = self.signs[3 * n_orient + oi] as f64 * 0.5;
        let s_dis = self.signs[4 * n_orient + oi] as f64 / span;

        let m = marginals(p, g);
        let corr_active = s_cor != 0.0 && m.var_i * m.var_j > DEGENERATE_VAR;
        let (sigma_prod, corr) = if corr_active {
            let denom = (m.var_i * m.var_j).sqrt();
            let mut num = 0.0f64;
            for i in 0..g {
                for j in 0..g {
                    num += (i as f64 - m.mu_i) * (j as f64 - m.mu_j) * p[i * g + j] as f64;
                }
            }
            (denom, num / denom)
        } else {
            (1.0, 0.0)
        };

        let mut gp = vec![0.0f64; g * g];
        for a in 0..g {
            for b in 0..g {
                let d = a as f64 - b as f64;
                let mut grad = 0.0f64;
                grad += s_asm * 2.0 * p[a * g + b] as f64;
                grad += s_con * d * d;
                grad += s_hom / ((1.0 + d.abs()) * (1.0 + d.abs()));
                grad += s_dis * d.abs();
                if corr_active {
                    let da = a as f64 - m.mu_i;
                    let db = b as f64 - m.mu_j;
                    grad += s_cor
                        * (da * db / sigma_prod
                            - corr * (da * da / (2.0 * m.var_i) + db * db / (2.0 * m.var_j)));
                }
                gp[a * g + b] = grad;
            }
        }
        gp
    }
}

impl FusedOp for SoftGlcmLossOp {
    fn backward(&self, ctx: &FusedCtx<'_>) -> Vec<Option<Vec<f32>>> {
        let upstream = ctx.out_grad[0];
        let gray = ctx.inputs[0].0;
        let plane = self.h * self.w;
        let mut dgray = vec![0.0f32; self.m * plane];
        if upstream == 0.0 || self.signs.iter().all(|&s| s == 0.0) {
            return vec![Some(dgray)];
        }
        let g = self.cfg.levels;
        let pixels = &gray[self.argmax * plane..(self.argmax + 1) * plane];
        let weights = soft_weights(pixels, g, self.cfg.tau);
        let mut dw = vec![0.0f32; plane * g];

        for (oi, offset) in GlcmOffset::ring(self.cfg.distance).iter().enumerate() {
            let (counts, npairs) =
                soft_counts(&weights, self.h, self.w, g, *offset).expect("validated at forward");
            let inv = (1.0 / npairs) as f32;
            let p: Vec<f32> = counts.iter().map(|&c| c * inv).collect();
            let gp = self.feature_grad_p(&p, oi);
            let gc: Vec<f32> = gp.iter().map(|&v| (v / npairs) as f32).collect();
            let (r0, r1, c0, c1) =
                pair_bounds(self.h, self.w, *offset).expect("validated at forward");
            for r in r0..r1 {
                for c in c0..c1 {
                    let pi = (r * self.w as i32 + c) as usize;
                    let qi = ((r + offset.dy) * self.w as i32 + (c + offset.dx)) as usize;
                    let wp = &weights[pi * g..(pi + 1) * g];
                    let wq = &weights[qi * g..(qi + 1) * g];
                    {
                        // dw[p][i] += Σ_j gc[i][j]·wq[j]
                        let dwp = &mut dw[pi * g..(pi + 1) * g];
                        for i in 0..g {
                            let row = &gc[i * g..(i + 1) * g];
                            let mut s = 0.0f32;
                            for (&gcv, &wqj) in row.iter().zip(wq) {
                                s += gcv * wqj;
                            }
                            dwp[i] += s;
                        }
                    }
                    {
                        // dw[q][j] += Σ_i gc[i][j]·wp[i]
                        let dwq = &mut dw[qi * g..(qi + 1) * g];
                        for (i, &wpi) in wp.iter().enumerate() {
                            if wpi == 0.0 {
                                continue;
                            }
                            let row = &gc[i * g..(i + 1) * g];
                            for (slot, &gcv) in dwq.iter_mut().zip(row) {
                                *slot += wpi * gcv;
                            }
                        }
                    }
                }
            }
        }

        // Through the softmax-style normalization of the weights:
        // ∂w_k/∂s = w_k (t_k − t̄), t_k = −2(s−k)/τ.
        let span = (g - 1) as f32;
        let dimg = &mut dgray[self.argmax * plane..(self.argmax + 1) * plane];
        for (pi, slot) in dimg.iter_mut().enumerate() {
            let s = pixels[pi] * span;
            let wp = &weights[pi * g..(pi + 1) * g];
            let dwp = &dw[pi * g..(pi + 1) * g];
            let mut t_bar = 0.0f32;
            for (k, &wk) in wp.iter().enumerate() {
                t_bar += wk * (-2.0 * (s - k as f32) / self.cfg.tau);
            }
            let mut ds = 0.0f32;
            for (k, (&wk, &dwk)) in wp.iter().zip(dwp).enumerate() {
                let t_k = -2.0 * (s - k as f32) / self.cfg.tau;
                ds += dwk * wk * (t_k - t_bar);
            }
            *slot = ds * span * upstream;
        }
        vec![Some(dgray)]
    }
}
