//! Image ingestion, preprocessing, class balancing/grouping, synthetic
//! texture dataset generation, and dataset splitting.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::texture::GRAYSCALE_LUMA;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Single-channel image, values in \[0,1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Shape(format!(
                "image data length {} does not match {height}x{width}",
                pixels.len()
            )));
        }
        Ok(Image { height, width, pixels })
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum::<f64>() / self.pixels.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct DataItem {
    pub image: Image,
    pub label: usize,
    pub source_path: Option<PathBuf>,
}

/// Labeled image collection. Labels index into `class_names`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<DataItem>,
    pub class_names: Vec<String>,
    pub seed: u64,
    /// Unreadable files skipped during directory loading.
    pub skipped_files: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_names.len()];
        for item in &self.items {
            counts[item.label] += 1;
        }
        counts
    }

    /// Common (H, W) of all items; errors if shapes are not uniform.
    pub fn uniform_shape(&self) -> Result<(usize, usize)> {
        let first = self
            .items
            .first()
            .ok_or_else(|| Error::Data("dataset is empty".into()))?;
        let shape = (first.image.height, first.image.width);
        for item in &self.items {
            if (item.image.height, item.image.width) != shape {
                return Err(Error::Data(format!(
                    "non-uniform image sizes: {}x{} and {}x{}",
                    shape.0, shape.1, item.image.height, item.image.width
                )));
            }
        }
        Ok(shape)
    }

    /// Assembles items at `indices` into an `[k,1,H,W]` batch plus labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let (h, w) = self.uniform_shape()?;
        let mut data = Vec::with_capacity(indices.len() * h * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.items[i].image.pixels);
            labels.push(self.items[i].label);
        }
        Ok((Tensor::new(data, &[indices.len(), 1, h, w])?, labels))
    }
}

/// Resize-short-side + center-crop recipe.
#[derive(Debug, Clone, Copy)]
pub struct PreprocessSpec {
    pub resize_short_side: usize,
    pub crop: usize,
}

impl PreprocessSpec {
    pub fn square(size: usize) -> Self {
        PreprocessSpec { resize_short_side: size, crop: size }
    }
}

/// Grayscale-loads a single PNG/PGM file into \[0,1] (RGB via luma weights,
/// 8-/16-bit depths normalized by their max value).
pub fn load_gray_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    use image::DynamicImage as D;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let luma = |r: f32, g: f32, b: f32| {
        GRAYSCALE_LUMA[0] as f64 * r as f64
            + GRAYSCALE_LUMA[1] as f64 * g as f64
            + GRAYSCALE_LUMA[2] as f64 * b as f64
    };
    let pixels: Vec<f32> = match img {
        D::ImageLuma8(buf) => buf.into_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        D::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f32 / 255.0).collect(),
        D::ImageLuma16(buf) => buf.into_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
        D::ImageLumaA16(buf) => buf.pixels().map(|p| p.0[0] as f32 / 65535.0).collect(),
        D::ImageRgb8(buf) => buf
            .pixels()
            .map(|p| {
                (luma(
                    p.0[0] as f32 / 255.0,
                    p.0[1] as f32 / 255.0,
                    p.0[2] as f32 / 255.0,
                )) as f32
            })
            .collect(),
        D::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| {
                (luma(
                    p.0[0] as f32 / 255.0,
                    p.0[1] as f32 / 255.0,
                    p.0[2] as f32 / 255.0,
                )) as f32
            })
            .collect(),
        D::ImageRgb16(buf) => buf
            .pixels()
            .map(|p| {
                (luma(
                    p.0[0] as f32 / 65535.0,
                    p.0[1] as f32 / 65535.0,
                    p.0[2] as f32 / 65535.0,
                )) as f32
            })
            .collect(),
        other => {
            let buf = other.to_rgb8();
            buf.pixels()
                .map(|p| {
                    (luma(
                        p.0[0] as f32 / 255.0,
                        p.0[1] as f32 / 255.0,
                        p.0[2] as f32 / 255.0,
                    )) as f32
                })
                .collect()
        }
    };
    let pixels = pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Image::new(h, w, pixels)
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| {
            let e = e.to_ascii_lowercase();
            e == "png" || e == "pgm"
        })
        .unwrap_or(false)
}

/// Loads `root/<class_name>/*.{png,pgm}`; class order is the lexicographic
/// directory order, files sorted by name within each class. RGB files are
/// converted by luma weights; 8- and 16-bit depths normalize by their max
/// value. Unreadable files are skipped and counted; an empty class is a
/// hard error.
pub fn load_image_dir(root: &Path) -> Result<Dataset> {
    let mut class_dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", root.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::Data(format!(
            "no class directories under {}",
            root.display()
        )));
    }
    let mut items = Vec::new();
    let mut class_names = Vec::new();
    let mut skipped_files = 0usize;
    for (label, dir) in class_dirs.iter().enumerate() {
        let class_name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Data(format!("unreadable class directory name {}", dir.display())))?
            .to_string();
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && has_image_extension(p))
            .collect();
        files.sort();
        let mut loaded = 0usize;
        for file in files {
            match load_gray_image(&file) {
                Ok(image) => {
                    items.push(DataItem { image, label, source_path: Some(file) });
                    loaded += 1;
                }
                Err(_) => skipped_files += 1,
            }
        }
        if loaded == 0 {
            return Err(Error::Data(format!(
                "class '{class_name}' in {} has no loadable images",
                root.display()
            )));
        }
        class_names.push(class_name);
    }
    Ok(Dataset { items, class_names, seed: 0, skipped_files })
}

/// Bilinear resample with pixel-center alignment
/// (`src = (dst + 0.5)·scale − 0.5`, edge-clamped).
pub fn resize_bilinear(img: &Image, out_h: usize, out_w: usize) -> Image {
    let scale_y = img.height as f64 / out_h as f64;
    let scale_x = img.width as f64 / out_w as f64;
    let mut pixels = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (img.height - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let ty = (sy - y0 as f64) as f32;
        for ox in 0..out_w {
            let sx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (img.width - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let tx = (sx - x0 as f64) as f32;
            let p00 = img.pixels[y0 * img.width + x0];
            let p01 = img.pixels[y0 * img.width + x1];
            let p10 = img.pixels[y1 * img.width + x0];
            let p11 = img.pixels[y1 * img.width + x1];
            let top = p00 + (p01 - p00) * tx;
            let bottom = p10 + (p11 - p10) * tx;
            pixels.push(top + (bottom - top) * ty);
        }
    }
    Image { height: out_h, width: out_w, pixels }
}

/// Bilinear-resizes so the short side equals `resize_short_side`, then
/// center-crops to `crop×crop`. Deterministic.
pub fn preprocess(img: &Image, spec: &PreprocessSpec) -> Result<Image> {
    if spec.crop > spec.resize_short_side {
        return Err(Error::InvalidArgument(format!(
            "crop {} exceeds resize short side {}",
            spec.crop, spec.resize_short_side
        )));
    }
    if img.height < 2 || img.width < 2 {
        return Err(Error::Shape(format!(
            "preprocess needs at least 2x2 input, got {}x{}",
            img.height, img.width
        )));
    }
    let target = spec.resize_short_side;
    let (out_h, out_w) = if img.height <= img.width {
        let w = ((img.width as f64 * target as f64 / img.height as f64).round() as usize).max(target);
        (target, w)
    } else {
        let h = ((img.height as f64 * target as f64 / img.width as f64).round() as usize).max(target);
        (h, target)
    };
    let resized = resize_bilinear(img, out_h, out_w);
    let crop = spec.crop;
    let top = (out_h - crop) / 2;
    let left = (out_w - crop) / 2;
    let mut pixels = Vec::with_capacity(crop * crop);
    for r in 0..crop {
        let row = (top + r) * out_w + left;
        pixels.extend_from_slice(&resized.pixels[row..row + crop]);
    }
    Ok(Image { height: crop, width: crop, pixels })
}

/// Applies [`preprocess`] to every item.
pub fn preprocess_dataset(ds: &Dataset, spec: &PreprocessSpec) -> Result<Dataset> {
    let mut out = ds.clone();
    for item in &mut out.items {
        item.image = preprocess(&item.image, spec)?;
    }
    Ok(out)
}

/// Relabels classes through `grouping` (old class name → new class name) and
/// downsamples every resulting class (seeded, without replacement) to the
/// minimum class size. New class order is lexicographic.
pub fn group_and_balance(
    ds: &Dataset,
    grouping: &BTreeMap<String, String>,
    seed: u64,
) -> Result<Dataset> {
    for name in &ds.class_names {
        if !grouping.contains_key(name) {
            return Err(Error::InvalidArgument(format!(
                "grouping does not cover class '{name}'"
            )));
        }
    }
    let mut new_names: Vec<String> = grouping.values().cloned().collect();
    new_names.sort();
    new_names.dedup();
    let relabel: Vec<usize> = ds
        .class_names
        .iter()
        .map(|old| {
            let target = &grouping[old];
            new_names.iter().position(|n| n == target).unwrap()
        })
        .collect();

    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); new_names.len()];
    for (idx, item) in ds.items.iter().enumerate() {
        per_class[relabel[item.label]].push(idx);
    }
    let min_size = per_class
        .iter()
        .map(|v| v.len())
        .min()
        .ok_or_else(|| Error::Data("grouping produced no classes".into()))?;
    if min_size == 0 {
        return Err(Error::Data("a grouped class has no items".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = Vec::new();
    for indices in &mut per_class {
        indices.shuffle(&mut rng);
        let mut chosen: Vec<usize> = indices[..min_size].to_vec();
        chosen.sort_unstable();
        keep.extend(chosen);
    }
    keep.sort_unstable();
    let items = keep
        .into_iter()
        .map(|i| {
            let mut item = ds.items[i].clone();
            item.label = relabel[item.label];
            item
        })
        .collect();
    Ok(Dataset { items, class_names: new_names, seed, skipped_files: ds.skipped_files })
}

fn box_blur(img: &mut Vec<f32>, h: usize, w: usize, radius: usize) {
    let mut out = vec![0.0f32; h * w];
    let r = radius as i32;
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            let mut acc = 0.0f32;
            let mut count = 0u32;
            for dy in -r..=r {
                for dx in -r..=r {
                    let yy = (y + dy).clamp(0, h as i32 - 1);
                    let xx = (x + dx).clamp(0, w as i32 - 1);
                    acc += img[(yy * w as i32 + xx) as usize];
                    count += 1;
                }
            }
            out[(y * w as i32 + x) as usize] = acc / count as f32;
        }
    }
    *img = out;
}

/// Shifts to mean 0.5 and rescales to `std` where the current spread allows.
fn normalize_image(pixels: &mut [f32], target_std: f32) {
    let n = pixels.len() as f64;
    let mean = pixels.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = pixels.iter().map(|&v| (v as f64 - mean) * (v as f64 - mean)).sum::<f64>() / n;
    let scale = if var > 1e-12 { target_std as f64 / var.sqrt() } else { 0.0 };
    for v in pixels.iter_mut() {
        *v = ((0.5 + (*v as f64 - mean) * scale) as f32).clamp(0.0, 1.0);
    }
}

/// Two-class synthetic texture dataset. Class `smooth` (0) is heavily blurred
/// noise (high homogeneity); class `striped` (1) is high-frequency oriented
/// stripes plus noise (high contrast at the distance-3 offsets). Per-image
/// phase/orientation jitter; per-image means are normalized to 0.5 so
/// first-order statistics alone cannot separate the classes.
pub fn synth_textures(n_per_class: usize, size: usize, seed: u64) -> Result<Dataset> {
    if size < 16 {
        return Err(Error::InvalidArgument(format!(
            "synthetic texture images must be at least 16x16, got {size}"
        )));
    }
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(2 * n_per_class);

    for _ in 0..n_per_class {
        let mut pixels: Vec<f32> = (0..size * size).map(|_| rng.random::<f32>()).collect();
        box_blur(&mut pixels, size, size, 2);
        box_blur(&mut pixels, size, size, 2);
        normalize_image(&mut pixels, 0.10);
        items.push(DataItem {
            image: Image { height: size, width: size, pixels },
            label: 0,
            source_path: None,
        });
    }

    for _ in 0..n_per_class {
        let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let angle = side * rng.random_range(10.0f32..25.0).to_radians();
        let phase = rng.random_range(0.0f32..std::f32::consts::TAU);
        let (cos_a, sin_a) = (angle.cos(), angle.sin());
        let period = 2.0f32;
        let mut pixels = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let u = x as f32 * cos_a + y as f32 * sin_a;
                let stripe = 0.16 * (std::f32::consts::TAU * u / period + phase).sin();
                let noise = 0.04 * (rng.random::<f32>() - 0.5);
                pixels.push(0.5 + stripe + noise);
            }
        }
        normalize_image(&mut pixels, 0.12);
        items.push(DataItem {
            image: Image { height: size, width: size, pixels },
            label: 1,
            source_path: None,
        });
    }

    Ok(Dataset {
        items,
        class_names: vec!["smooth".into(), "striped".into()],
        seed,
        skipped_files: 0,
    })
}

/// Stratified seeded split into disjoint, exhaustive train/test parts.
/// Each class contributes `floor(fraction·n)` items to train, clamped so
/// both sides stay non-empty.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in (0,1), got {train_fraction}"
        )));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_names.len()];
    for (idx, item) in ds.items.iter().enumerate() {
        per_class[item.label].push(idx);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (label, indices) in per_class.iter_mut().enumerate() {
        if indices.len() < 2 {
            return Err(Error::Data(format!(
                "class '{}' has {} items; need at least 2 to split",
                ds.class_names[label],
                indices.len()
            )));
        }
        indices.shuffle(&mut rng);
        let take = ((train_fraction * indices.len() as f64).floor() as usize)
            .clamp(1, indices.len() - 1);
        train_idx.extend_from_slice(&indices[..take]);
        test_idx.extend_from_slice(&indices[take..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |idxs: &[usize]| Dataset {
        items: idxs.iter().map(|&i| ds.items[i].clone()).collect(),
        class_names: ds.class_names.clone(),
        seed,
        skipped_files: ds.skipped_files,
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// Writes the dataset as 8-bit grayscale PNGs under
/// `out/<class_name>/img_<n>.png` (items numbered per class in order).
pub fn write_image_dir(ds: &Dataset, out: &Path) -> Result<()> {
    let mut counters = vec![0usize; ds.class_names.len()];
    for class in &ds.class_names {
        std::fs::create_dir_all(out.join(class))?;
    }
    for item in &ds.items {
        let class = &ds.class_names[item.label];
        let file = out.join(class).join(format!("img_{:04}.png", counters[item.label]));
        counters[item.label] += 1;
        let bytes: Vec<u8> = item
            .image
            .pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let buf = image::GrayImage::from_raw(item.image.width as u32, item.image.height as u32, bytes)
            .ok_or_else(|| Error::Image("failed to assemble PNG buffer".into()))?;
        buf.save(&file)
            .map_err(|e| Error::Image(format!("{}: {e}", file.display())))?;
    }
    Ok(())
}
