//! Robustness sweeps over attacks × ε and CSV report emission.

use crate::attack::{run_attack, AttackConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelStack;
use crate::tensor::Graph;
use crate::train::count_correct;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Perturbation budget as an exact `k/255` rational, matching the attack
/// grid and avoiding float-printing drift in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Epsilon {
    pub numer: u32,
}

impl Epsilon {
    pub fn over_255(numer: u32) -> Self {
        Epsilon { numer }
    }

    pub fn value(&self) -> f32 {
        self.numer as f32 / 255.0
    }

    /// The standard sweep grid 1/255 … 8/255.
    pub fn standard_grid() -> Vec<Epsilon> {
        (1..=8).map(Epsilon::over_255).collect()
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/255", self.numer)
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (numer, denom) = s
            .split_once('/')
            .ok_or_else(|| Error::InvalidArgument(format!("epsilon '{s}' must be of the form k/255")))?;
        if denom.trim() != "255" {
            return Err(Error::InvalidArgument(format!(
                "epsilon '{s}' must use denominator 255"
            )));
        }
        let numer: u32 = numer
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("epsilon '{s}': bad numerator")))?;
        if numer > 255 {
            return Err(Error::InvalidArgument(format!(
                "epsilon '{s}' exceeds the [0,1] pixel range"
            )));
        }
        Ok(Epsilon { numer })
    }
}

/// One accuracy measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub variant: String,
    pub backbone: String,
    /// Attack name, or `"clean"` for the unattacked row.
    pub attack: String,
    pub epsilon: Epsilon,
    pub adversarial: bool,
    pub accuracy: f32,
    pub n_samples: usize,
    pub seed: u64,
}

/// Accuracy records for (model-variant, attack, ε) cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RobustnessReport {
    pub rows: Vec<RobustnessRow>,
}

impl RobustnessReport {
    pub fn merge(&mut self, other: RobustnessReport) {
        self.rows.extend(other.rows);
    }

    /// Deterministic order: variant ascending, clean row first, then attack
    /// name and ε ascending.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (&a.variant, a.adversarial, &a.attack, a.epsilon.numer).cmp(&(
                &b.variant,
                b.adversarial,
                &b.attack,
                b.epsilon.numer,
            ))
        });
    }

    pub fn accuracy_of(&self, attack: &str, eps: Epsilon) -> Option<f32> {
        self.rows
            .iter()
            .find(|r| r.attack == attack && r.epsilon == eps)
            .map(|r| r.accuracy)
    }
}

fn adversarial_accuracy(
    stack: &ModelStack,
    ds: &Dataset,
    cfg: &AttackConfig,
    batch_size: usize,
) -> Result<f32> {
    let indices: Vec<usize> = (0..ds.len()).collect();
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, labels) = ds.batch(chunk)?;
        let adv = run_attack(stack, &x, &labels, cfg)?;
        let mut g = Graph::new();
        let pass = stack.forward_eval(&mut g, &adv)?;
        correct += count_correct(g.value(pass.logits), &labels, ds.class_names.len());
    }
    Ok(correct as f32 / ds.len() as f32)
}

/// Clean accuracy first, then one row per (attack, ε) over the full test
/// set, model frozen in eval mode throughout.
pub fn robustness_sweep(
    stack: &ModelStack,
    test: &Dataset,
    attacks: &[AttackConfig],
    epsilons: &[Epsilon],
    backbone: &str,
    seed: u64,
    batch_size: usize,
) -> Result<RobustnessReport> {
    if test.is_empty() {
        return Err(Error::Data("robustness sweep needs a non-empty test set".into()));
    }
    let variant = stack.variant.as_str().to_string();
    let n = test.len();
    let mut report = RobustnessReport::default();
    let clean = crate::train::evaluate_accuracy(stack, test, batch_size)?;
    report.rows.push(RobustnessRow {
        variant: variant.clone(),
        backbone: backbone.to_string(),
        attack: "clean".into(),
        epsilon: Epsilon::over_255(0),
        adversarial: false,
        accuracy: clean,
        n_samples: n,
        seed,
    });
    for attack in attacks {
        for &eps in epsilons {
            let cell = AttackConfig { epsilon: eps.value(), seed, ..attack.clone() };
            let accuracy = adversarial_accuracy(stack, test, &cell, batch_size)?;
            report.rows.push(RobustnessRow {
                variant: variant.clone(),
                backbone: backbone.to_string(),
                attack: attack.kind.as_str().into(),
                epsilon: eps,
                adversarial: true,
                accuracy,
                n_samples: n,
                seed,
            });
        }
    }
    report.sort();
    Ok(report)
}

pub const CSV_HEADER: &str = "variant,backbone,attack,epsilon,accuracy,n_samples,seed";

/// Serializes the report (UTF-8, LF line endings, deterministic row order).
pub fn report_to_csv(report: &RobustnessReport) -> String {
    let mut sorted = report.clone();
    sorted.sort();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &sorted.rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{},{}\n",
            r.variant, r.backbone, r.attack, r.epsilon, r.accuracy, r.n_samples, r.seed
        ));
    }
    out
}

pub fn write_report_csv(report: &RobustnessReport, path: &Path) -> Result<()> {
    std::fs::write(path, report_to_csv(report))?;
    Ok(())
}

/// Parses a report written by [`write_report_csv`].
pub fn read_report_csv(path: &Path) -> Result<RobustnessReport> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty report", path.display())))?;
    if header != CSV_HEADER {
        return Err(Error::Data(format!("{}: unexpected header '{header}'", path.display())));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Data(format!(
                "{}: line {} has {} fields",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        let parse = |what: &str, v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Data(format!("bad {what} value '{v}'")))
        };
        rows.push(RobustnessRow {
            variant: fields[0].to_string(),
            backbone: fields[1].to_string(),
            attack: fields[2].to_string(),
            epsilon: fields[3].parse()?,
            adversarial: fields[2] != "clean",
            accuracy: parse("accuracy", fields[4])? as f32,
            n_samples: parse("n_samples", fields[5])? as usize,
            seed: parse("seed", fields[6])? as u64,
        });
    }
    Ok(RobustnessReport { rows })
}
