//! Subcommand implementations.

use crate::config::Settings;
use crate::{AppError, AttackEvalArgs, DataSource, FeatureArgs, HistArgs, SynthArgs, TrainArgs};
use dasm_core::attack::{AttackConfig, AttackKind};
use dasm_core::data::{
    load_gray_image, load_image_dir, preprocess_dataset, split, synth_textures, write_image_dir,
    Dataset, PreprocessSpec,
};
use dasm_core::model::{ModelStack, StackConfig, Variant};
use dasm_core::report::{robustness_sweep, write_report_csv, Epsilon};
use dasm_core::texture::{
    glcm, glcm_normalize, histogram_stats, quantize, sot_features, GlcmOffset, ORIENTATIONS_DEG,
};
use dasm_core::train::{save_checkpoint, train as train_model, GlcmTrainCfg, TrainConfig};
use std::path::{Path, PathBuf};

fn load_settings(config: &Option<PathBuf>, seed: Option<u64>) -> Result<Settings, AppError> {
    let mut settings = match config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    if let Some(s) = seed {
        settings.seed = s;
    }
    Ok(settings)
}

fn load_dataset(source: &DataSource, size: usize, settings: &Settings) -> Result<Dataset, AppError> {
    match (&source.data, source.synth) {
        (Some(dir), false) => {
            let raw = load_image_dir(dir)?;
            if raw.skipped_files > 0 {
                eprintln!("warning: skipped {} unreadable file(s)", raw.skipped_files);
            }
            Ok(preprocess_dataset(&raw, &PreprocessSpec::square(size))?)
        }
        (None, true) => Ok(synth_textures(settings.synth_n, size, settings.seed)?),
        _ => Err(AppError::Usage(
            "exactly one of --data or --synth is required".into(),
        )),
    }
}

pub fn train(args: TrainArgs) -> Result<(), AppError> {
    let settings = load_settings(&args.config, args.seed)?;
    let variant = Variant::parse(&args.variant)?;
    let dataset = load_dataset(&args.source, settings.input_size, &settings)?;
    let (train_ds, val_ds) = split(&dataset, settings.train_fraction, settings.seed)?;

    let stack_cfg = StackConfig {
        variant,
        input_h: settings.input_size,
        input_w: settings.input_size,
        num_classes: dataset.class_names.len(),
        width: settings.width,
        dropout_p: settings.dropout,
        hidden: settings.hidden,
        backbone: dasm_core::model::BackboneSpec::SmallCnn,
        seed: settings.seed,
    };
    let stack = ModelStack::build(&stack_cfg)?;
    let train_cfg = TrainConfig {
        epochs: settings.epochs,
        batch_size: settings.batch_size,
        lr: settings.lr,
        patience: settings.patience,
        alpha: settings.alpha,
        glcm: GlcmTrainCfg {
            levels: settings.glcm_levels,
            distance: settings.glcm_distance,
            tau: settings.glcm_tau,
            subsample: settings.glcm_subsample,
        },
        seed: settings.seed,
        variant,
    };
    let (trained, history) = train_model(stack, &train_ds, &val_ds, &train_cfg)?;
    save_checkpoint(&trained, &args.out)?;
    println!(
        "trained variant={} classes={} epochs_run={} best_epoch={} best_val_accuracy={:.6}",
        variant.as_str(),
        dataset.class_names.len(),
        history.records.len(),
        history.best_epoch,
        history.best_val_accuracy
    );
    println!("checkpoint written to {}", args.out.display());
    Ok(())
}

pub fn attack_eval(args: AttackEvalArgs) -> Result<(), AppError> {
    let settings = load_settings(&args.config, args.seed)?;
    // Validate the requested attack grid before any I/O.
    let mut attacks = Vec::new();
    for name in args.attacks.split(',') {
        let kind = AttackKind::parse(name.trim()).map_err(|e| AppError::Usage(e.to_string()))?;
        attacks.push(AttackConfig {
            steps: settings.attack_steps,
            mu: settings.mifgsm_mu,
            random_start: settings.pgd_random_start,
            seed: settings.seed,
            ..AttackConfig::new(kind, 0.0)
        });
    }
    let mut epsilons = Vec::new();
    for eps in args.epsilons.split(',') {
        epsilons.push(
            eps.trim()
                .parse::<Epsilon>()
                .map_err(|e| AppError::Usage(e.to_string()))?,
        );
    }

    let stack = dasm_core::train::load_checkpoint(&args.ckpt)?;
    if stack.input_h != stack.input_w {
        return Err(AppError::Runtime(format!(
            "checkpoint expects a non-square input {}x{}",
            stack.input_h, stack.input_w
        )));
    }
    let dataset = load_dataset(&args.source, stack.input_h, &settings)?;
    if dataset.class_names.len() != stack.num_classes {
        return Err(AppError::Runtime(format!(
            "dataset has {} classes but the checkpoint was trained for {}",
            dataset.class_names.len(),
            stack.num_classes
        )));
    }
    // Evaluate on the held-out part of the same seeded split used by `train`.
    let (_, test_ds) = split(&dataset, settings.train_fraction, settings.seed)?;

    let report = robustness_sweep(
        &stack,
        &test_ds,
        &attacks,
        &epsilons,
        "smallcnn",
        settings.seed,
        settings.batch_size,
    )?;
    write_report_csv(&report, &args.out)?;
    let clean = report
        .rows
        .iter()
        .find(|r| !r.adversarial)
        .map(|r| r.accuracy)
        .unwrap_or(f32::NAN);
    println!(
        "evaluated variant={} n_test={} clean_accuracy={clean:.6} rows={}",
        stack.variant.as_str(),
        test_ds.len(),
        report.rows.len()
    );
    println!("report written to {}", args.out.display());
    Ok(())
}

/// Collects PNG/PGM files: the single `--image`, or a recursive sorted walk
/// of `--dir`.
fn collect_images(image: &Option<PathBuf>, dir: &Option<PathBuf>) -> Result<Vec<PathBuf>, AppError> {
    match (image, dir) {
        (Some(file), None) => Ok(vec![file.clone()]),
        (None, Some(root)) => {
            fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
                let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .collect();
                entries.sort();
                for path in entries {
                    if path.is_dir() {
                        walk(&path, out)?;
                    } else if path
                        .extension()
                        .and_then(|e| e.to_str())
                        .map(|e| {
                            let e = e.to_ascii_lowercase();
                            e == "png" || e == "pgm"
                        })
                        .unwrap_or(false)
                    {
                        out.push(path);
                    }
                }
                Ok(())
            }
            let mut files = Vec::new();
            walk(root, &mut files)
                .map_err(|e| AppError::Runtime(format!("cannot walk {}: {e}", root.display())))?;
            if files.is_empty() {
                return Err(AppError::Runtime(format!(
                    "no PNG/PGM files under {}",
                    root.display()
                )));
            }
            Ok(files)
        }
        _ => Err(AppError::Usage(
            "exactly one of --image or --dir is required".into(),
        )),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), AppError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| AppError::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn glcm_features(args: FeatureArgs) -> Result<(), AppError> {
    let files = collect_images(&args.image, &args.dir)?;
    let mut csv =
        String::from("image_path,orientation,distance,asm,contrast,homogeneity,correlation,dissimilarity\n");
    for file in files {
        let img = load_gray_image(&file)?;
        let map = quantize(&img.pixels, img.height, img.width, args.levels)?;
        for (oi, offset) in GlcmOffset::ring(args.distance).iter().enumerate() {
            let normalized = glcm_normalize(&glcm(&map, *offset)?)?;
            let f = sot_features(normalized.normalized.as_ref().unwrap(), args.levels);
            csv.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                file.display(),
                ORIENTATIONS_DEG[oi],
                args.distance,
                f.asm,
                f.contrast,
                f.homogeneity,
                f.correlation,
                f.dissimilarity
            ));
        }
    }
    emit(&args.out, &csv)
}

pub fn hist_features(args: HistArgs) -> Result<(), AppError> {
    let files = collect_images(&args.image, &args.dir)?;
    let mut csv = String::from("image_path,mean,variance,skewness,kurtosis\n");
    for file in files {
        let img = load_gray_image(&file)?;
        let s = histogram_stats(&img.pixels)?;
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            file.display(),
            s.mean,
            s.variance,
            s.skewness,
            s.kurtosis
        ));
    }
    emit(&args.out, &csv)
}

pub fn synth(args: SynthArgs) -> Result<(), AppError> {
    let ds = synth_textures(args.n, args.size, args.seed)?;
    write_image_dir(&ds, &args.out)?;
    println!(
        "wrote {} images ({} per class) of {}x{} to {}",
        ds.len(),
        args.n,
        args.size,
        args.size,
        args.out.display()
    );
    Ok(())
}
