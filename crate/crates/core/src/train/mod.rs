//! End-to-end training of the three model variants with the combined
//! cross-entropy + texture-preservation loss, early stopping, and
//! checkpointing.

pub mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ForwardPass, ModelStack, Variant};
use crate::tensor::{adam_step, AdamHyper, AdamState, Graph, NodeId, Tensor};
use crate::texture::soft::{soft_glcm_loss_node, SoftGlcmCfg};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// GLCM-loss settings used during training.
#[derive(Debug, Clone, Copy)]
pub struct GlcmTrainCfg {
    pub levels: usize,
    pub distance: usize,
    pub tau: f32,
    /// At most this many images per batch feed the GLCM term (it dominates
    /// cost); the leading items of the shuffled batch are used.
    pub subsample: usize,
}

impl Default for GlcmTrainCfg {
    fn default() -> Self {
        GlcmTrainCfg { levels: 16, distance: 3, tau: 0.25, subsample: 8 }
    }
}

impl GlcmTrainCfg {
    pub fn soft(&self) -> SoftGlcmCfg {
        SoftGlcmCfg::new(self.levels, self.distance, self.tau)
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub patience: usize,
    /// Cross-entropy weight in the combined loss (GLCM term gets `1−alpha`).
    pub alpha: f32,
    pub glcm: GlcmTrainCfg,
    pub seed: u64,
    pub variant: Variant,
}

impl TrainConfig {
    pub fn new(variant: Variant, seed: u64) -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 32,
            lr: 1e-4,
            patience: 30,
            alpha: 0.98,
            glcm: GlcmTrainCfg::default(),
            seed,
            variant,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        if self.patience > self.epochs {
            return Err(Error::InvalidArgument(format!(
                "patience {} exceeds epochs {}",
                self.patience, self.epochs
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-batch loss components, logged for every training step.
#[derive(Debug, Clone, Copy)]
pub struct BatchLoss {
    pub epoch: usize,
    pub ce: f32,
    pub glcm: f32,
    pub combined: f32,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    pub train_ce: f32,
    pub train_glcm: f32,
    pub combined: f32,
    pub val_accuracy: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStopped,
    CompletedAllEpochs,
}

#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub batch_records: Vec<BatchLoss>,
    pub best_epoch: usize,
    pub best_val_accuracy: f32,
    pub stop: StopReason,
}

/// Validation-accuracy early stopping: stops once `patience` epochs pass
/// without strict improvement (ties keep the earlier epoch).
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f32,
    best_epoch: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper { patience, best: f32::NEG_INFINITY, best_epoch: 0 }
    }

    /// Feeds one epoch's validation accuracy; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, accuracy: f32) -> (bool, bool) {
        let improved = accuracy > self.best;
        if improved {
            self.best = accuracy;
            self.best_epoch = epoch;
        }
        (improved, epoch - self.best_epoch >= self.patience)
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_accuracy(&self) -> f32 {
        self.best
    }
}

/// Recorded loss nodes of one training step.
pub struct LossNodes {
    pub combined: NodeId,
    pub ce: NodeId,
    pub glcm: Option<NodeId>,
}

/// `α·CE + (1−α)·softGLCM` with both terms separately inspectable.
/// Used by the `tc_glcm` variant; other variants train on pure CE.
pub fn combined_loss(
    g: &mut Graph,
    logits: NodeId,
    labels: &[usize],
    colorized: NodeId,
    original: &Tensor,
    alpha: f32,
    glcm_cfg: &SoftGlcmCfg,
) -> Result<LossNodes> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in [0,1], got {alpha}"
        )));
    }
    let ce = g.softmax_cross_entropy(logits, labels)?;
    let glcm = soft_glcm_loss_node(g, colorized, original, glcm_cfg)?;
    let weighted_ce = g.scale(ce, alpha);
    let weighted_glcm = g.scale(glcm, 1.0 - alpha);
    let combined = g.add(weighted_ce, weighted_glcm)?;
    Ok(LossNodes { combined, ce, glcm: Some(glcm) })
}

/// Mean eval-mode classification accuracy over the dataset.
pub fn evaluate_accuracy(stack: &ModelStack, ds: &Dataset, batch_size: usize) -> Result<f32> {
    if ds.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let indices: Vec<usize> = (0..ds.len()).collect();
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, labels) = ds.batch(chunk)?;
        let mut g = Graph::new();
        let pass = stack.forward_eval(&mut g, &x)?;
        correct += count_correct(g.value(pass.logits), &labels, ds.class_names.len());
    }
    Ok(correct as f32 / ds.len() as f32)
}

pub(crate) fn count_correct(logits: &[f32], labels: &[usize], k: usize) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(i, &label)| {
            let row = &logits[i * k..(i + 1) * k];
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best == label
        })
        .count()
}

/// Trains the stack: seeded shuffling per epoch, per-batch forward, combined
/// loss (variant-dependent), backward, Adam step; validation accuracy per
/// epoch with early stopping. Returns the weights from the best validation
/// epoch together with the full history.
pub fn train(
    stack: ModelStack,
    train_ds: &Dataset,
    val_ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(ModelStack, TrainHistory)> {
    cfg.validate()?;
    if train_ds.is_empty() || val_ds.is_empty() {
        return Err(Error::Data("train and validation datasets must be non-empty".into()));
    }
    if cfg.variant != stack.variant {
        return Err(Error::InvalidArgument(format!(
            "config variant {} does not match stack variant {}",
            cfg.variant.as_str(),
            stack.variant.as_str()
        )));
    }
    let (h, w) = train_ds.uniform_shape()?;
    if (h, w) != (stack.input_h, stack.input_w) {
        return Err(Error::Shape(format!(
            "dataset images are {h}x{w} but the stack expects {}x{}",
            stack.input_h, stack.input_w
        )));
    }

    let mut stack = stack;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new();
    let hyper = AdamHyper { lr: cfg.lr, ..Default::default() };
    // A zero learning rate short-circuits to a no-update loop: eval-mode
    // forwards, no optimizer step, batch-norm statistics frozen. Weights and
    // per-epoch accuracy are then exactly constant.
    let frozen = cfg.lr == 0.0;
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best_stack = stack.clone();
    let mut records = Vec::new();
    let mut batch_records = Vec::new();
    let mut stop = StopReason::CompletedAllEpochs;

    let mut indices: Vec<usize> = (0..train_ds.len()).collect();
    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut rng);
        let mut ce_sum = 0.0f64;
        let mut glcm_sum = 0.0f64;
        let mut combined_sum = 0.0f64;
        let mut batches = 0usize;
        for (batch_idx, chunk) in indices.chunks(cfg.batch_size).enumerate() {
            let (x, labels) = train_ds.batch(chunk)?;
            let mut g = Graph::new();
            let pass: ForwardPass = if frozen {
                stack.forward_eval(&mut g, &x)?
            } else {
                stack.forward_train(&mut g, &x, &mut rng)?
            };
            let losses = match cfg.variant {
                Variant::TcGlcm => {
                    let k = cfg.glcm.subsample.clamp(1, chunk.len());
                    let colorized_head = g.slice_batch(pass.colorized, k)?;
                    let original_head =
                        Tensor::new(x.data()[..k * h * w].to_vec(), &[k, 1, h, w])?;
                    combined_loss(
                        &mut g,
                        pass.logits,
                        &labels,
                        colorized_head,
                        &original_head,
                        cfg.alpha,
                        &cfg.glcm.soft(),
                    )?
                }
                _ => {
                    let ce = g.softmax_cross_entropy(pass.logits, &labels)?;
                    LossNodes { combined: ce, ce, glcm: None }
                }
            };
            let combined_value = g.scalar(losses.combined);
            if !combined_value.is_finite() {
                return Err(Error::Diverged { epoch, batch: batch_idx });
            }
            let ce_value = g.scalar(losses.ce);
            let glcm_value = losses.glcm.map(|n| g.scalar(n)).unwrap_or(0.0);
            batch_records.push(BatchLoss {
                epoch,
                ce: ce_value,
                glcm: glcm_value,
                combined: combined_value,
            });
            ce_sum += ce_value as f64;
            glcm_sum += glcm_value as f64;
            combined_sum += combined_value as f64;
            batches += 1;

            if !frozen {
                g.backward(losses.combined)?;
                stack.accumulate_grads(&g, &pass);
                let mut params = stack.named_params_mut();
                let mut refs: Vec<&mut Tensor> =
                    params.iter_mut().map(|(_, t)| &mut **t).collect();
                adam_step(&mut refs, &mut adam, &hyper)?;
                stack.zero_grads();
            }
        }

        let val_accuracy = evaluate_accuracy(&stack, val_ds, cfg.batch_size)?;
        records.push(EpochRecord {
            epoch,
            train_ce: (ce_sum / batches as f64) as f32,
            train_glcm: (glcm_sum / batches as f64) as f32,
            combined: (combined_sum / batches as f64) as f32,
            val_accuracy,
        });
        let (improved, should_stop) = stopper.observe(epoch, val_accuracy);
        if improved {
            best_stack = stack.clone();
        }
        if should_stop {
            stop = StopReason::EarlyStopped;
            break;
        }
    }

    Ok((
        best_stack,
        TrainHistory {
            records,
            batch_records,
            best_epoch: stopper.best_epoch(),
            best_val_accuracy: stopper.best_accuracy(),
            stop,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_textures;
    use crate::model::StackConfig;
    use rand::Rng;

    fn quick_cfg(variant: Variant, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            lr: 1e-3,
            patience: epochs,
            alpha: 0.98,
            glcm: GlcmTrainCfg { levels: 8, distance: 3, tau: 0.25, subsample: 4 },
            seed,
            variant,
        }
    }

    fn small_data(n: usize, seed: u64) -> (Dataset, Dataset) {
        let ds = synth_textures(n, 16, seed).unwrap();
        crate::data::split(&ds, 0.8, seed).unwrap()
    }

    #[test]
    fn early_stopper_plateau_halts_patience_epochs_after_best() {
        let mut stopper = EarlyStopper::new(5);
        let accuracies = [0.5, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8];
        let mut stopped_at = None;
        for (i, &acc) in accuracies.iter().enumerate() {
            let epoch = i + 1;
            let (_, stop) = stopper.observe(epoch, acc);
            if stop {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopper.best_epoch(), 2, "ties keep the earlier epoch");
        assert_eq!(stopped_at, Some(7), "stop exactly patience epochs past the best");
    }

    #[test]
    fn early_stopper_resets_on_improvement() {
        let mut stopper = EarlyStopper::new(3);
        for (epoch, acc) in [(1, 0.5), (2, 0.4), (3, 0.6), (4, 0.5), (5, 0.5)] {
            let (_, stop) = stopper.observe(epoch, acc);
            assert!(!stop);
        }
        let (_, stop) = stopper.observe(6, 0.5);
        assert!(stop);
        assert_eq!(stopper.best_epoch(), 3);
    }

    #[test]
    fn lr_zero_leaves_weights_unchanged_and_accuracy_flat() {
        let (train_ds, val_ds) = small_data(20, 3);
        let stack = ModelStack::build(&StackConfig::new(Variant::Base, 16, 16, 2, 5)).unwrap();
        let before: Vec<Vec<f32>> =
            stack.named_params().iter().map(|(_, t)| t.data().to_vec()).collect();
        let cfg = TrainConfig { lr: 0.0, ..quick_cfg(Variant::Base, 3, 5) };
        let (trained, history) = train(stack, &train_ds, &val_ds, &cfg).unwrap();
        let after: Vec<Vec<f32>> =
            trained.named_params().iter().map(|(_, t)| t.data().to_vec()).collect();
        assert_eq!(before, after);
        let accs: Vec<f32> = history.records.iter().map(|r| r.val_accuracy).collect();
        assert!(accs.windows(2).all(|w| w[0] == w[1]), "accuracy should be flat: {accs:?}");
    }

    #[test]
    fn plateau_run_stops_exactly_patience_epochs_past_best() {
        let (train_ds, val_ds) = small_data(16, 7);
        let stack = ModelStack::build(&StackConfig::new(Variant::Base, 16, 16, 2, 7)).unwrap();
        let cfg = TrainConfig {
            lr: 0.0, // accuracy plateaus immediately, so best epoch is 1
            patience: 3,
            epochs: 50,
            ..quick_cfg(Variant::Base, 50, 7)
        };
        let (_, history) = train(stack, &train_ds, &val_ds, &cfg).unwrap();
        assert_eq!(history.best_epoch, 1);
        assert_eq!(history.records.len(), 4, "stops at epoch 1 + patience");
        assert_eq!(history.stop, StopReason::EarlyStopped);
    }

    #[test]
    fn combined_loss_arithmetic_decomposes() {
        let (train_ds, val_ds) = small_data(16, 11);
        let stack = ModelStack::build(&StackConfig::new(Variant::TcGlcm, 16, 16, 2, 11)).unwrap();
        let cfg = quick_cfg(Variant::TcGlcm, 2, 11);
        let (_, history) = train(stack, &train_ds, &val_ds, &cfg).unwrap();
        assert!(!history.batch_records.is_empty());
        for b in &history.batch_records {
            let expected = 0.98f64 * b.ce as f64 + 0.02f64 * b.glcm as f64;
            assert!(
                (b.combined as f64 - expected).abs() < 1e-6,
                "combined {} vs {expected}",
                b.combined
            );
        }
    }

    #[test]
    fn alpha_one_collapses_to_pure_ce() {
        let (train_ds, _) = small_data(8, 13);
        let mut stack =
            ModelStack::build(&StackConfig::new(Variant::TcGlcm, 16, 16, 2, 13)).unwrap();
        let (x, labels) = train_ds.batch(&[0, 1, 2, 3]).unwrap();
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pass = stack.forward_train(&mut g, &x, &mut rng).unwrap();
        let original = Tensor::new(x.data().to_vec(), x.shape()).unwrap();
        let losses = combined_loss(
            &mut g,
            pass.logits,
            &labels,
            pass.colorized,
            &original,
            1.0,
            &SoftGlcmCfg::new(8, 3, 0.25),
        )
        .unwrap();
        assert_eq!(g.scalar(losses.combined), g.scalar(losses.ce));
    }

    #[test]
    fn alpha_zero_on_replicated_original_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gray: Vec<f32> = (0..2 * 64).map(|_| rng.random::<f32>()).collect();
        let original = Tensor::new(gray.clone(), &[2, 1, 8, 8]).unwrap();
        let mut g = Graph::new();
        let orig_node = g.leaf(&original);
        let colorized = g.replicate_channels(orig_node, 3).unwrap();
        let logits = g.constant(vec![0.0, 1.0, 1.0, 0.0], &[2, 2]);
        let losses = combined_loss(
            &mut g,
            logits,
            &[0, 1],
            colorized,
            &original,
            0.0,
            &SoftGlcmCfg::new(8, 3, 0.25),
        )
        .unwrap();
        assert_eq!(g.scalar(losses.combined), 0.0);
    }

    #[test]
    fn history_is_reproducible_for_fixed_seed() {
        let run = || {
            let (train_ds, val_ds) = small_data(16, 17);
            let stack =
                ModelStack::build(&StackConfig::new(Variant::Base, 16, 16, 2, 17)).unwrap();
            let (_, history) = train(stack, &train_ds, &val_ds, &quick_cfg(Variant::Base, 3, 17)).unwrap();
            history
                .records
                .iter()
                .map(|r| (r.train_ce.to_bits(), r.val_accuracy.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_is_reported_with_location() {
        let (train_ds, val_ds) = small_data(8, 19);
        let stack = ModelStack::build(&StackConfig::new(Variant::Base, 16, 16, 2, 19)).unwrap();
        let cfg = TrainConfig { lr: 1e18, ..quick_cfg(Variant::Base, 20, 19) };
        match train(stack, &train_ds, &val_ds, &cfg) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn variant_mismatch_is_rejected() {
        let (train_ds, val_ds) = small_data(8, 23);
        let stack = ModelStack::build(&StackConfig::new(Variant::Base, 16, 16, 2, 23)).unwrap();
        let cfg = quick_cfg(Variant::Tc, 2, 23);
        assert!(train(stack, &train_ds, &val_ds, &cfg).is_err());
    }

    #[test]
    fn tc_glcm_has_no_dead_components_under_combined_loss() {
        // Every parameter must receive a nonzero gradient on at least one of
        // a few random batches.
        let ds = synth_textures(12, 16, 37).unwrap();
        let mut stack =
            ModelStack::build(&StackConfig::new(Variant::TcGlcm, 16, 16, 2, 37)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let cfg = SoftGlcmCfg::new(8, 3, 0.25);
        for batch in 0..3 {
            let idxs: Vec<usize> = (0..8).map(|i| (batch * 8 + i) % ds.len()).collect();
            let (x, labels) = ds.batch(&idxs).unwrap();
            let mut g = Graph::new();
            let pass = stack.forward_train(&mut g, &x, &mut rng).unwrap();
            let original = Tensor::new(x.data().to_vec(), x.shape()).unwrap();
            let losses = combined_loss(
                &mut g,
                pass.logits,
                &labels,
                pass.colorized,
                &original,
                0.98,
                &cfg,
            )
            .unwrap();
            g.backward(losses.combined).unwrap();
            stack.accumulate_grads(&g, &pass);
        }
        for (name, p) in stack.named_params() {
            let nonzero = p.grad().is_some_and(|gr| gr.iter().any(|&v| v != 0.0));
            assert!(nonzero, "parameter {name} received no gradient (dead component)");
        }
    }

    #[test]
    fn tc_glcm_texture_pressure_keeps_glcm_term_bounded() {
        // The final-epoch GLCM loss must not exceed its epoch-1 value by
        // more than 10%.
        let ds = synth_textures(24, 16, 41).unwrap();
        let (train_ds, val_ds) = crate::data::split(&ds, 0.8, 41).unwrap();
        let stack =
            ModelStack::build(&StackConfig::new(Variant::TcGlcm, 16, 16, 2, 41)).unwrap();
        let cfg = TrainConfig {
            epochs: 6,
            batch_size: 8,
            lr: 1e-3,
            patience: 6,
            alpha: 0.98,
            glcm: GlcmTrainCfg { levels: 8, distance: 3, tau: 0.25, subsample: 4 },
            seed: 41,
            variant: Variant::TcGlcm,
        };
        let (_, history) = train(stack, &train_ds, &val_ds, &cfg).unwrap();
        let first = history.records.first().unwrap().train_glcm;
        let last = history.records.last().unwrap().train_glcm;
        assert!(first.is_finite() && last.is_finite());
        assert!(
            last <= first * 1.10 + 1e-6,
            "GLCM term grew from {first} to {last} (texture pressure inactive)"
        );
        assert_eq!(
            history.best_val_accuracy,
            history
                .records
                .iter()
                .map(|r| r.val_accuracy)
                .fold(f32::NEG_INFINITY, f32::max),
            "best accuracy equals the max over records"
        );
    }

    #[test]
    fn training_improves_over_initial_accuracy() {
        let (train_ds, val_ds) = small_data(40, 29);
        let stack = ModelStack::build(&StackConfig::new(Variant::Base, 16, 16, 2, 29)).unwrap();
        let cfg = quick_cfg(Variant::Base, 12, 29);
        let (trained, history) = train(stack, &train_ds, &val_ds, &cfg).unwrap();
        assert!(history.best_val_accuracy >= 0.7, "history: {:?}", history.records);
        let train_acc = evaluate_accuracy(&trained, &train_ds, 16).unwrap();
        assert!(train_acc >= 0.7, "train accuracy {train_acc}");
    }
}
