//! GLCM construction, second-order texture features, first-order histogram
//! statistics, and the batch GLCM loss (hard reference variant here, the
//! differentiable soft variant in [`soft`]).

pub mod soft;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Luma weights used for every RGB→gray conversion in the workbench.
pub const GRAYSCALE_LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// The eight co-occurrence orientations, ascending, in degrees.
pub const ORIENTATIONS_DEG: [u32; 8] = [0, 45, 90, 135, 180, 225, 270, 315];

/// Number of scalar texture features per orientation.
pub const N_FEATURES: usize = 5;

/// Width of a feature row: 5 features × 8 orientations.
pub const SOT_WIDTH: usize = N_FEATURES * ORIENTATIONS_DEG.len();

/// Pixel-pair displacement. `dx` moves along columns, `dy` along rows; the
/// partner of pixel `(r, c)` is `(r + dy, c + dx)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlcmOffset {
    pub dx: i32,
    pub dy: i32,
}

impl GlcmOffset {
    /// Offset for a distance and an orientation in degrees:
    /// `dx = d·round(cos θ)`, `dy = d·round(sin θ)`, so diagonals at
    /// distance 3 step (±3, ±3).
    pub fn from_distance_orientation(distance: usize, degrees: u32) -> Self {
        let rad = (degrees as f64).to_radians();
        let dx = distance as i32 * rad.cos().round() as i32;
        let dy = distance as i32 * rad.sin().round() as i32;
        GlcmOffset { dx, dy }
    }

    /// All eight offsets for one distance, orientation-ascending.
    pub fn ring(distance: usize) -> [GlcmOffset; 8] {
        let mut out = [GlcmOffset { dx: 0, dy: 0 }; 8];
        for (slot, &deg) in out.iter_mut().zip(ORIENTATIONS_DEG.iter()) {
            *slot = GlcmOffset::from_distance_orientation(distance, deg);
        }
        out
    }
}

/// Integer gray-level map produced by [`quantize`].
#[derive(Debug, Clone)]
pub struct LevelMap {
    pub levels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

/// Gray-level co-occurrence counts for one image and one offset.
///
/// `counts` is row-major `levels × levels`: `counts[i*levels + j]` is the
/// number of positions whose base pixel has level `i` and offset partner
/// level `j`. Asymmetric — no transpose accumulation.
#[derive(Debug, Clone)]
pub struct GlcmMatrix {
    pub levels: usize,
    pub offset: GlcmOffset,
    pub counts: Vec<u32>,
    /// `counts / sum(counts)`, set by [`glcm_normalize`].
    pub normalized: Option<Vec<f32>>,
}

impl GlcmMatrix {
    pub fn total_pairs(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Raw (unnormalized-range) second-order texture scalars of one GLCM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SotFeatures {
    pub asm: f64,
    pub contrast: f64,
    pub homogeneity: f64,
    pub correlation: f64,
    pub dissimilarity: f64,
}

impl SotFeatures {
    /// Rescales each feature into \[0,1] by its analytic bound: ASM and
    /// Homogeneity are already in range, Contrast divides by (G−1)²,
    /// Dissimilarity by (G−1), Correlation maps through (c+1)/2. Clamped
    /// against float round-off.
    pub fn normalized(&self, levels: usize) -> [f32; N_FEATURES] {
        let span = (levels - 1) as f64;
        let vals = [
            self.asm,
            self.contrast / (span * span),
            self.homogeneity,
            (self.correlation + 1.0) / 2.0,
            self.dissimilarity / span,
        ];
        vals.map(|v| v.clamp(0.0, 1.0) as f32)
    }
}

/// Batch feature matrix: one row of `SOT_WIDTH` normalized features per
/// image, laid out feature-major (`index = feature·8 + orientation`).
#[derive(Debug, Clone, PartialEq)]
pub struct SotFeatureMatrix {
    pub rows: usize,
    pub values: Vec<f32>,
}

impl SotFeatureMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * SOT_WIDTH..(i + 1) * SOT_WIDTH]
    }
}

/// 256-bin histogram plus first-order moments of a single-channel image.
/// Moments are computed from the raw pixel values (population style);
/// `degenerate` marks a (near-)constant image whose standardized moments
/// are reported as 0.
#[derive(Debug, Clone)]
pub struct HistogramStats {
    pub histogram: Vec<u32>,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub degenerate: bool,
}

/// Uniform-bin quantization: `level = min(floor(v·G), G−1)`.
pub fn quantize(pixels: &[f32], height: usize, width: usize, levels: usize) -> Result<LevelMap> {
    if !(2..=256).contains(&levels) {
        return Err(Error::InvalidArgument(format!(
            "quantize: gray levels must be in [2,256], got {levels}"
        )));
    }
    if pixels.len() != height * width {
        return Err(Error::Shape(format!(
            "quantize: {} pixels for {height}x{width} image",
            pixels.len()
        )));
    }
    let g = levels as f32;
    let mut data = Vec::with_capacity(pixels.len());
    for &v in pixels {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Range(format!(
                "quantize: pixel value {v} outside [0,1]"
            )));
        }
        data.push(((v * g).floor() as usize).min(levels - 1) as u8);
    }
    Ok(LevelMap { levels, height, width, data })
}

/// Counts co-occurring level pairs at the offset; pairs falling outside the
/// image are skipped.
pub fn glcm(map: &LevelMap, offset: GlcmOffset) -> Result<GlcmMatrix> {
    let (h, w) = (map.height as i32, map.width as i32);
    if offset.dx.abs() >= w || offset.dy.abs() >= h || (offset.dx == 0 && offset.dy == 0) {
        return Err(Error::DegenerateGlcm(format!(
            "offset ({}, {}) admits no pixel pairs in a {h}x{w} image",
            offset.dx, offset.dy
        )));
    }
    let g = map.levels;
    let mut counts = vec![0u32; g * g];
    let r0 = (-offset.dy).max(0);
    let r1 = (h - offset.dy).min(h);
    let c0 = (-offset.dx).max(0);
    let c1 = (w - offset.dx).min(w);
    for r in r0..r1 {
        let base_row = (r * w) as usize;
        let part_row = ((r + offset.dy) * w) as usize;
        for c in c0..c1 {
            let i = map.data[base_row + c as usize] as usize;
            let j = map.data[part_row + (c + offset.dx) as usize] as usize;
            counts[i * g + j] += 1;
        }
    }
    Ok(GlcmMatrix { levels: g, offset, counts, normalized: None })
}

/// Fills in `normalized = counts / sum(counts)`.
pub fn glcm_normalize(m: &GlcmMatrix) -> Result<GlcmMatrix> {
    let total = m.total_pairs();
    if total == 0 {
        return Err(Error::DegenerateGlcm(
            "cannot normalize a GLCM with zero pairs".into(),
        ));
    }
    let inv = 1.0 / total as f64;
    let p = m.counts.iter().map(|&c| (c as f64 * inv) as f32).collect();
    Ok(GlcmMatrix { normalized: Some(p), ..m.clone() })
}

/// Second-order texture features of a normalized GLCM.
///
/// Correlation of a GLCM with a zero marginal variance is defined as 1
/// (a constant marginal is perfectly predictable).
pub fn sot_features(p: &[f32], levels: usize) -> SotFeatures {
    debug_assert_eq!(p.len(), levels * levels);
    let g = levels;
    let mut asm = 0.0f64;
    let mut contrast = 0.0f64;
    let mut homogeneity = 0.0f64;
    let mut dissimilarity = 0.0f64;
    let mut row_marginal = vec![0.0f64; g];
    let mut col_marginal = vec![0.0f64; g];
    for i in 0..g {
        for j in 0..g {
            let v = p[i * g + j] as f64;
            let d = i as f64 - j as f64;
            asm += v * v;
            contrast += d * d * v;
            homogeneity += v / ((1.0 + d.abs()) * (1.0 + d.abs()));
            dissimilarity += d.abs() * v;
            row_marginal[i] += v;
            col_marginal[j] += v;
        }
    }
    let mean_of = |m: &[f64]| m.iter().enumerate().map(|(i, &v)| i as f64 * v).sum::<f64>();
    let mu_i = mean_of(&row_marginal);
    let mu_j = mean_of(&col_marginal);
    let var_of = |m: &[f64], mu: f64| {
        m.iter()
            .enumerate()
            .map(|(i, &v)| (i as f64 - mu) * (i as f64 - mu) * v)
            .sum::<f64>()
    };
    let var_i = var_of(&row_marginal, mu_i);
    let var_j = var_of(&col_marginal, mu_j);
    let correlation = if var_i <= 0.0 || var_j <= 0.0 {
        1.0
    } else {
        let denom = (var_i * var_j).sqrt();
        let mut num = 0.0f64;
        for i in 0..g {
            for j in 0..g {
                num += (i as f64 - mu_i) * (j as f64 - mu_j) * p[i * g + j] as f64;
            }
        }
        num / denom
    };
    SotFeatures { asm, contrast, homogeneity, correlation, dissimilarity }
}

/// Normalized feature row (5 features × 8 orientations, feature-major) for
/// one single-channel image.
pub fn sot_row(pixels: &[f32], h: usize, w: usize, distance: usize, levels: usize) -> Result<[f32; SOT_WIDTH]> {
    let map = quantize(pixels, h, w, levels)?;
    let mut row = [0.0f32; SOT_WIDTH];
    for (oi, offset) in GlcmOffset::ring(distance).iter().enumerate() {
        let m = glcm(&map, *offset)?;
        let norm = glcm_normalize(&m)?;
        let feats = sot_features(norm.normalized.as_ref().unwrap(), levels).normalized(levels);
        for (fi, &f) in feats.iter().enumerate() {
            row[fi * ORIENTATIONS_DEG.len() + oi] = f;
        }
    }
    Ok(row)
}

/// Stacks [`sot_row`] over a batch of `m` single-channel images
/// (`batch` is `m·h·w` long, row-major per image).
pub fn sot_matrix(
    batch: &[f32],
    m: usize,
    h: usize,
    w: usize,
    distance: usize,
    levels: usize,
) -> Result<SotFeatureMatrix> {
    if batch.len() != m * h * w {
        return Err(Error::Shape(format!(
            "sot_matrix: batch of {} values does not hold {m} images of {h}x{w}",
            batch.len()
        )));
    }
    let mut values = Vec::with_capacity(m * SOT_WIDTH);
    for i in 0..m {
        let row = sot_row(&batch[i * h * w..(i + 1) * h * w], h, w, distance, levels)?;
        values.extend_from_slice(&row);
    }
    Ok(SotFeatureMatrix { rows: m, values })
}

/// Luma conversion of an `N×3×H×W` batch into `N×1×H×W`.
pub fn grayscale_batch(colorized: &Tensor) -> Result<Tensor> {
    let s = colorized.shape();
    if s.len() != 4 || s[1] != 3 {
        return Err(Error::Shape(format!(
            "grayscale_batch: expected [N,3,H,W], got {s:?}"
        )));
    }
    let (n, h, w) = (s[0], s[2], s[3]);
    let plane = h * w;
    let src = colorized.data();
    let mut out = vec![0.0f32; n * plane];
    // f64 accumulation so replicated channels invert exactly back to the input.
    for ni in 0..n {
        let base = ni * 3 * plane;
        let dst = &mut out[ni * plane..(ni + 1) * plane];
        for (i, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for (ci, &wc) in GRAYSCALE_LUMA.iter().enumerate() {
                acc += wc as f64 * src[base + ci * plane + i] as f64;
            }
            *d = acc as f32;
        }
    }
    Tensor::new(out, &[n, 1, h, w])
}

/// Maximum over rows of the per-row L1 feature distance; returns the value
/// and the argmax row (ties to the first).
pub fn max_row_l1(a: &SotFeatureMatrix, b: &SotFeatureMatrix) -> (f32, usize) {
    debug_assert_eq!(a.rows, b.rows);
    let mut best = f32::NEG_INFINITY;
    let mut best_row = 0;
    for i in 0..a.rows {
        let d: f32 = a
            .row(i)
            .iter()
            .zip(b.row(i))
            .map(|(x, y)| (x - y).abs())
            .sum();
        if d > best {
            best = d;
            best_row = i;
        }
    }
    (best, best_row)
}

/// Hard-binned GLCM loss: L∞ over the batch of L1 distances between the
/// normalized feature rows of the gray-converted colorized batch and of the
/// original single-channel batch. Evaluation-only (zero gradient almost
/// everywhere); training uses [`soft::soft_glcm_loss`].
pub fn glcm_loss(
    colorized: &Tensor,
    original: &Tensor,
    distance: usize,
    levels: usize,
) -> Result<f32> {
    let os = original.shape();
    if os.len() != 4 || os[1] != 1 {
        return Err(Error::Shape(format!(
            "glcm_loss: original must be [N,1,H,W], got {os:?}"
        )));
    }
    let gray = grayscale_batch(colorized)?;
    if gray.shape() != os {
        return Err(Error::Shape(format!(
            "glcm_loss: batch axes differ — colorized {:?} vs original {os:?}",
            colorized.shape()
        )));
    }
    let (m, h, w) = (os[0], os[2], os[3]);
    let a = sot_matrix(gray.data(), m, h, w, distance, levels)?;
    let b = sot_matrix(original.data(), m, h, w, distance, levels)?;
    Ok(max_row_l1(&a, &b).0)
}

/// First-order gray-level statistics of a single-channel image.
pub fn histogram_stats(pixels: &[f32]) -> Result<HistogramStats> {
    if pixels.is_empty() {
        return Err(Error::Shape("histogram_stats: empty image".into()));
    }
    let mut histogram = vec![0u32; 256];
    let mut sum = 0.0f64;
    for &v in pixels {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Range(format!(
                "histogram_stats: pixel value {v} outside [0,1]"
            )));
        }
        histogram[((v * 256.0) as usize).min(255)] += 1;
        sum += v as f64;
    }
    let n = pixels.len() as f64;
    let mean = sum / n;
    let (mut m2, mut m3, mut m4) = (0.0f64, 0.0f64, 0.0f64);
    for &v in pixels {
        let d = v as f64 - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let degenerate = m2 <= 1e-12;
    let (skewness, kurtosis) = if degenerate {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    };
    Ok(HistogramStats { histogram, mean, variance: m2, skewness, kurtosis, degenerate })
}
