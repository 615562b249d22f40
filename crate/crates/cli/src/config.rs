//! Config-file settings: UTF-8 lines of `key = value`, `#` comments.
//! Unknown keys are a hard error.

use crate::AppError;
use std::path::Path;

/// All tunable knobs shared by `train` and `attack-eval`. Defaults follow
/// the standard recipe (300 epochs, batch 32, lr 1e-4, patience 30,
/// α = 0.98, 16 gray levels, distance 3).
#[derive(Debug, Clone)]
pub struct Settings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub patience: usize,
    pub alpha: f32,
    pub glcm_levels: usize,
    pub glcm_distance: usize,
    pub glcm_tau: f32,
    pub glcm_subsample: usize,
    pub seed: u64,
    pub input_size: usize,
    pub train_fraction: f64,
    pub synth_n: usize,
    pub width: usize,
    pub dropout: f32,
    pub hidden: usize,
    pub attack_steps: usize,
    pub mifgsm_mu: f32,
    pub pgd_random_start: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            epochs: 300,
            batch_size: 32,
            lr: 1e-4,
            patience: 30,
            alpha: 0.98,
            glcm_levels: 16,
            glcm_distance: 3,
            glcm_tau: 0.25,
            glcm_subsample: 8,
            seed: 0,
            input_size: 32,
            train_fraction: 0.8,
            synth_n: 200,
            width: 1,
            dropout: 0.5,
            hidden: 128,
            attack_steps: 10,
            mifgsm_mu: 1.0,
            pgd_random_start: false,
        }
    }
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut s = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                AppError::Usage(format!(
                    "{}:{}: expected 'key = value', got '{raw}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                AppError::Usage(format!(
                    "{}:{}: bad {what} value '{value}' for key '{key}'",
                    path.display(),
                    lineno + 1
                ))
            };
            macro_rules! parse {
                ($ty:ty, $what:literal) => {
                    value.parse::<$ty>().map_err(|_| bad($what))?
                };
            }
            match key {
                "epochs" => s.epochs = parse!(usize, "integer"),
                "batch_size" => s.batch_size = parse!(usize, "integer"),
                "lr" => s.lr = parse!(f32, "float"),
                "patience" => s.patience = parse!(usize, "integer"),
                "alpha" => s.alpha = parse!(f32, "float"),
                "glcm_levels" => s.glcm_levels = parse!(usize, "integer"),
                "glcm_distance" => s.glcm_distance = parse!(usize, "integer"),
                "glcm_tau" => s.glcm_tau = parse!(f32, "float"),
                "glcm_subsample" => s.glcm_subsample = parse!(usize, "integer"),
                "seed" => s.seed = parse!(u64, "integer"),
                "input_size" => s.input_size = parse!(usize, "integer"),
                "train_fraction" => s.train_fraction = parse!(f64, "float"),
                "synth_n" => s.synth_n = parse!(usize, "integer"),
                "width" => s.width = parse!(usize, "integer"),
                "dropout" => s.dropout = parse!(f32, "float"),
                "hidden" => s.hidden = parse!(usize, "integer"),
                "attack_steps" => s.attack_steps = parse!(usize, "integer"),
                "mifgsm_mu" => s.mifgsm_mu = parse!(f32, "float"),
                "pgd_random_start" => s.pgd_random_start = parse!(bool, "bool"),
                other => {
                    return Err(AppError::Usage(format!(
                        "{}:{}: unknown config key '{other}'",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        Ok(s)
    }
}
