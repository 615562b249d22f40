//! Gradient-based adversarial example generators — FGSM, BIM, MIFGSM, PGD —
//! operating on any composed model through [`AttackTarget`].
//!
//! All attacks use plain cross-entropy toward the true labels, run the model
//! in eval mode, never mutate the input batch, and keep every iterate inside
//! the ε-ball around the input intersected with \[0,1]. `sign(0) = 0`.

use crate::error::{Error, Result};
use crate::model::ModelStack;
use crate::tensor::{Graph, NodeId, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Anything that maps an input node to logits on a tape in eval mode.
pub trait AttackTarget {
    fn logits(&self, g: &mut Graph, x: NodeId) -> Result<NodeId>;
}

impl AttackTarget for ModelStack {
    fn logits(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        Ok(self.forward_eval_node(g, x)?.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    Fgsm,
    Bim,
    Mifgsm,
    Pgd,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [AttackKind::Fgsm, AttackKind::Bim, AttackKind::Mifgsm, AttackKind::Pgd];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Bim => "bim",
            AttackKind::Mifgsm => "mifgsm",
            AttackKind::Pgd => "pgd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fgsm" => Ok(AttackKind::Fgsm),
            "bim" => Ok(AttackKind::Bim),
            "mifgsm" => Ok(AttackKind::Mifgsm),
            "pgd" => Ok(AttackKind::Pgd),
            other => Err(Error::InvalidArgument(format!(
                "unknown attack '{other}' (valid: fgsm, bim, mifgsm, pgd)"
            ))),
        }
    }
}

/// Attack parameters under an L∞ budget in \[0,1] pixel units.
#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub epsilon: f32,
    /// Step size for BIM/PGD; `None` defaults to ε/T.
    pub alpha: Option<f32>,
    /// Iteration count for the iterative kinds.
    pub steps: usize,
    /// Momentum decay factor (MIFGSM).
    pub mu: f32,
    /// Uniform random initialization inside the ε-ball (PGD).
    pub random_start: bool,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(kind: AttackKind, epsilon: f32) -> Self {
        AttackConfig { kind, epsilon, alpha: None, steps: 10, mu: 1.0, random_start: false, seed: 0 }
    }

    fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 || self.epsilon > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be in [0,1], got {}",
                self.epsilon
            )));
        }
        if self.steps < 1 {
            return Err(Error::InvalidArgument("attack steps must be >= 1".into()));
        }
        if let Some(a) = self.alpha {
            if a <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "attack step size must be > 0, got {a}"
                )));
            }
        }
        Ok(())
    }

    fn step_size(&self) -> f32 {
        self.alpha.unwrap_or(self.epsilon / self.steps as f32)
    }
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Cross-entropy gradient w.r.t. the input batch, eval mode.
fn input_gradient<M: AttackTarget + ?Sized>(model: &M, x: &Tensor, y: &[usize]) -> Result<Vec<f32>> {
    let mut g = Graph::new();
    let mut probe = x.clone();
    probe.set_requires_grad(true);
    let input = g.leaf(&probe);
    let logits = model.logits(&mut g, input)?;
    let loss = g.softmax_cross_entropy(logits, y)?;
    g.backward(loss)?;
    Ok(g.grad(input)
        .map(|s| s.to_vec())
        .unwrap_or_else(|| vec![0.0; x.numel()]))
}

/// Single signed-gradient step clipped to \[0,1]:
/// `x_adv = clip(x + ε·sign(∇_x L))`.
pub fn fgsm<M: AttackTarget + ?Sized>(model: &M, x: &Tensor, y: &[usize], epsilon: f32) -> Result<Tensor> {
    let grad = input_gradient(model, x, y)?;
    let mut out = x.clone();
    out.set_requires_grad(false);
    for (v, g) in out.data_mut().iter_mut().zip(&grad) {
        *v = (*v + epsilon * sign(*g)).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Iterate trace of BIM: α-sized signed steps, each clipped to the ε-ball
/// around `x` intersected with \[0,1]. `trace[0]` is the unperturbed input.
pub fn bim_trace<M: AttackTarget + ?Sized>(
    model: &M,
    x: &Tensor,
    y: &[usize],
    epsilon: f32,
    alpha: f32,
    steps: usize,
) -> Result<Vec<Tensor>> {
    let mut current = x.clone();
    current.set_requires_grad(false);
    let mut trace = vec![current.clone()];
    for _ in 0..steps {
        let grad = input_gradient(model, &current, y)?;
        for ((v, g), &x0) in current.data_mut().iter_mut().zip(&grad).zip(x.data()) {
            let stepped = *v + alpha * sign(*g);
            *v = stepped.clamp((x0 - epsilon).max(0.0), (x0 + epsilon).min(1.0));
        }
        trace.push(current.clone());
    }
    Ok(trace)
}

pub fn bim<M: AttackTarget + ?Sized>(
    model: &M,
    x: &Tensor,
    y: &[usize],
    epsilon: f32,
    alpha: f32,
    steps: usize,
) -> Result<Tensor> {
    Ok(bim_trace(model, x, y, epsilon, alpha, steps)?.pop().unwrap())
}

/// Iterate trace of MIFGSM: α = ε/T, per-item L1-normalized gradients
/// accumulated with momentum μ, signed steps, each iterate clamped to \[0,1]
/// (the fixed α = ε/T keeps iterates inside the ε-ball without projection).
/// A zero-gradient item contributes nothing to the momentum buffer.
pub fn mifgsm_trace<M: AttackTarget + ?Sized>(
    model: &M,
    x: &Tensor,
    y: &[usize],
    epsilon: f32,
    steps: usize,
    mu: f32,
) -> Result<Vec<Tensor>> {
    let alpha = epsilon / steps as f32;
    let batch = x.shape().first().copied().unwrap_or(1);
    let per_item = x.numel() / batch.max(1);
    let mut momentum = vec![0.0f32; x.numel()];
    let mut current = x.clone();
    current.set_requires_grad(false);
    let mut trace = vec![current.clone()];
    for _ in 0..steps {
        let grad = input_gradient(model, &current, y)?;
        for item in 0..batch {
            let slice = item * per_item..(item + 1) * per_item;
            let l1: f32 = grad[slice.clone()].iter().map(|v| v.abs()).sum();
            let inv = if l1 > 0.0 { 1.0 / l1 } else { 0.0 };
            for (m, g) in momentum[slice.clone()].iter_mut().zip(&grad[slice]) {
                *m = mu * *m + g * inv;
            }
        }
        for (v, m) in current.data_mut().iter_mut().zip(&momentum) {
            *v = (*v + alpha * sign(*m)).clamp(0.0, 1.0);
        }
        trace.push(current.clone());
    }
    Ok(trace)
}

pub fn mifgsm<M: AttackTarget + ?Sized>(
    model: &M,
    x: &Tensor,
    y: &[usize],
    epsilon: f32,
    steps: usize,
    mu: f32,
) -> Result<Tensor> {
    Ok(mifgsm_trace(model, x, y, epsilon, steps, mu)?.pop().unwrap())
}

/// Iterate trace of PGD: optional seeded uniform start in the ε-ball, then
/// projected signed-gradient ascent (projection = ε-ball ∩ \[0,1]).
#[allow(clippy::too_many_arguments)]
pub fn pgd_trace<M: AttackTarget + ?Sized>(
    model: &M,
    x: &Tensor,
    y: &[usize],
    epsilon: f32,
    alpha: f32,
    steps: usize,
    random_start: bool,
    seed: u64,
) -> Result<Vec<Tensor>> {
    let mut current = x.clone();
    current.set_requires_grad(false);
    if random_start {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in current.data_mut() {
            let noise = if epsilon > 0.0 { rng.random_range(-epsilon..=epsilon) } else { 0.0 };
            *v = (*v + noise).clamp(0.0, 1.0);
        }
    }
    let mut trace = vec![current.clone()];
    for _ in 0..steps {
        let grad = input_gradient(model, &current, y)?;
        for ((v, g), &x0) in current.data_mut().iter_mut().zip(&grad).zip(x.data()) {
            let stepped = *v + alpha * sign(*g);
            *v = stepped.clamp((x0 - epsilon).max(0.0), (x0 + epsilon).min(1.0));
        }
        trace.push(current.clone());
    }
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
pub fn pgd<M: AttackTarget + ?Sized>(
    model: &M,
    x: &Tensor,
    y: &[usize],
    epsilon: f32,
    alpha: f32,
    steps: usize,
    random_start: bool,
    seed: u64,
) -> Result<Tensor> {
    Ok(pgd_trace(model, x, y, epsilon, alpha, steps, random_start, seed)?.pop().unwrap())
}

/// Dispatches one configured attack on a batch.
pub fn run_attack<M: AttackTarget + ?Sized>(
    model: &M,
    x: &Tensor,
    y: &[usize],
    cfg: &AttackConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    match cfg.kind {
        AttackKind::Fgsm => fgsm(model, x, y, cfg.epsilon),
        AttackKind::Bim => bim(model, x, y, cfg.epsilon, cfg.step_size(), cfg.steps),
        AttackKind::Mifgsm => mifgsm(model, x, y, cfg.epsilon, cfg.steps, cfg.mu),
        AttackKind::Pgd => pgd(
            model,
            x,
            y,
            cfg.epsilon,
            cfg.step_size(),
            cfg.steps,
            cfg.random_start,
            cfg.seed,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two-class linear model: logits = x @ wᵀ (no bias).
    struct LinearModel {
        w: Tensor, // [2, D]
    }

    impl AttackTarget for LinearModel {
        fn logits(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
            let w = g.constant(self.w.data().to_vec(), self.w.shape());
            let b = g.constant(vec![0.0, 0.0], &[2]);
            g.dense(x, w, b)
        }
    }

    fn linear_model(d: usize, seed: u64) -> LinearModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..2 * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        LinearModel { w: Tensor::new(data, &[2, d]).unwrap() }
    }

    fn random_x(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..n * d).map(|_| rng.random_range(0.2f32..0.8)).collect();
        Tensor::new(data, &[n, d]).unwrap()
    }

    fn assert_in_ball(adv: &Tensor, x: &Tensor, eps: f32) {
        for (a, b) in adv.data().iter().zip(x.data()) {
            assert!((a - b).abs() <= eps + 1e-6, "|{a} - {b}| > {eps}");
            assert!((0.0..=1.0).contains(a));
        }
    }

    #[test]
    fn fgsm_zero_epsilon_is_identity() {
        let model = linear_model(6, 1);
        let x = random_x(3, 6, 2);
        let adv = fgsm(&model, &x, &[0, 1, 0], 0.0).unwrap();
        assert_eq!(adv.data(), x.data());
    }

    #[test]
    fn fgsm_matches_closed_form_logistic_gradient() {
        // For logits [w0·x, w1·x] and true label y, dL/dx = Σ_k (p_k − 1{k=y}) w_k.
        let model = linear_model(4, 3);
        let x = random_x(1, 4, 4);
        let eps = 0.05f32;
        let adv = fgsm(&model, &x, &[0], eps).unwrap();

        let w = model.w.data();
        let z0: f32 = (0..4).map(|i| w[i] * x.data()[i]).sum();
        let z1: f32 = (0..4).map(|i| w[4 + i] * x.data()[i]).sum();
        let m = z0.max(z1);
        let (e0, e1) = ((z0 - m).exp(), (z1 - m).exp());
        let p0 = e0 / (e0 + e1);
        let p1 = e1 / (e0 + e1);
        for i in 0..4 {
            let grad = (p0 - 1.0) * w[i] + p1 * w[4 + i];
            let expected = (x.data()[i] + eps * grad.signum()).clamp(0.0, 1.0);
            assert!(
                (adv.data()[i] - expected).abs() < 1e-6,
                "element {i}: {} vs {expected}",
                adv.data()[i]
            );
        }
    }

    #[test]
    fn fgsm_respects_linf_budget() {
        let model = linear_model(8, 5);
        let x = random_x(4, 8, 6);
        for eps in [0.01f32, 0.1, 0.5] {
            let adv = fgsm(&model, &x, &[0, 1, 1, 0], eps).unwrap();
            assert_in_ball(&adv, &x, eps);
        }
    }

    #[test]
    fn bim_single_step_with_alpha_epsilon_equals_fgsm() {
        let model = linear_model(8, 7);
        let x = random_x(3, 8, 8);
        let eps = 4.0 / 255.0;
        let a = fgsm(&model, &x, &[1, 0, 1], eps).unwrap();
        let b = bim(&model, &x, &[1, 0, 1], eps, eps, 1).unwrap();
        assert_eq!(a.data(), b.data(), "bit-exact family collapse");
    }

    #[test]
    fn bim_zero_epsilon_is_identity() {
        let model = linear_model(4, 9);
        let x = random_x(2, 4, 10);
        let adv = bim(&model, &x, &[0, 1], 0.0, 0.0 + 1e-9, 5).unwrap();
        assert_eq!(adv.data(), x.data());
    }

    #[test]
    fn bim_iterates_stay_in_ball() {
        let model = linear_model(6, 11);
        let x = random_x(3, 6, 12);
        let eps = 8.0 / 255.0;
        let trace = bim_trace(&model, &x, &[0, 0, 1], eps, eps / 3.0, 5).unwrap();
        assert_eq!(trace.len(), 6);
        for iterate in &trace {
            assert_in_ball(iterate, &x, eps);
        }
    }

    #[test]
    fn pgd_without_random_start_equals_bim_trace() {
        let model = linear_model(8, 13);
        let x = random_x(3, 8, 14);
        let eps = 6.0 / 255.0;
        let alpha = eps / 4.0;
        let a = bim_trace(&model, &x, &[1, 1, 0], eps, alpha, 6).unwrap();
        let b = pgd_trace(&model, &x, &[1, 1, 0], eps, alpha, 6, false, 0).unwrap();
        assert_eq!(a.len(), b.len());
        for (ta, tb) in a.iter().zip(&b) {
            assert_eq!(ta.data(), tb.data(), "bit-exact trace equality");
        }
    }

    #[test]
    fn pgd_random_start_is_seeded_and_in_ball() {
        let model = linear_model(6, 15);
        let x = random_x(2, 6, 16);
        let eps = 8.0 / 255.0;
        let a = pgd_trace(&model, &x, &[0, 1], eps, eps / 4.0, 4, true, 99).unwrap();
        let b = pgd_trace(&model, &x, &[0, 1], eps, eps / 4.0, 4, true, 99).unwrap();
        for (ta, tb) in a.iter().zip(&b) {
            assert_eq!(ta.data(), tb.data());
        }
        for iterate in &a {
            assert_in_ball(iterate, &x, eps);
        }
        let c = pgd_trace(&model, &x, &[0, 1], eps, eps / 4.0, 4, true, 100).unwrap();
        assert_ne!(a[0].data(), c[0].data(), "different seeds, different starts");
    }

    #[test]
    fn mifgsm_single_step_equals_fgsm() {
        let model = linear_model(8, 17);
        let x = random_x(3, 8, 18);
        let eps = 5.0 / 255.0;
        let a = fgsm(&model, &x, &[0, 1, 1], eps).unwrap();
        let b = mifgsm(&model, &x, &[0, 1, 1], eps, 1, 0.7).unwrap();
        assert_eq!(a.data(), b.data(), "momentum has no history at T=1");
    }

    #[test]
    fn mifgsm_zero_momentum_equals_bim_with_eps_over_t() {
        let model = linear_model(8, 19);
        let x = random_x(3, 8, 20);
        let eps = 8.0 / 255.0;
        let steps = 5;
        let a = mifgsm_trace(&model, &x, &[1, 0, 0], eps, steps, 0.0).unwrap();
        let b = bim_trace(&model, &x, &[1, 0, 0], eps, eps / steps as f32, steps).unwrap();
        // BIM's ε-ball clip cannot bind before the final step (t·α < ε), so
        // those iterates are bit-equal; at step T the accumulated float sum
        // of the T α-steps can overshoot ε by an ulp, which BIM clips and
        // MIFGSM by definition does not.
        for (ta, tb) in a.iter().take(steps).zip(&b) {
            assert_eq!(ta.data(), tb.data());
        }
        for (va, vb) in a[steps].data().iter().zip(b[steps].data()) {
            assert!((va - vb).abs() <= 1e-6, "{va} vs {vb}");
        }
    }

    #[test]
    fn mifgsm_iterates_stay_in_ball_and_unit_range() {
        let model = linear_model(6, 21);
        let x = random_x(2, 6, 22);
        let eps = 8.0 / 255.0;
        let trace = mifgsm_trace(&model, &x, &[0, 1], eps, 6, 1.0).unwrap();
        for iterate in &trace {
            assert_in_ball(iterate, &x, eps);
        }
    }

    #[test]
    fn zero_gradient_produces_no_perturbation() {
        struct ConstantModel;
        impl AttackTarget for ConstantModel {
            fn logits(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
                let n = g.shape(x)[0];
                Ok(g.constant(vec![0.3; n * 2], &[n, 2]))
            }
        }
        let x = random_x(2, 4, 23);
        let labels = [0, 1];
        for cfg in [
            AttackConfig::new(AttackKind::Fgsm, 0.1),
            AttackConfig::new(AttackKind::Bim, 0.1),
            AttackConfig::new(AttackKind::Mifgsm, 0.1),
            AttackConfig::new(AttackKind::Pgd, 0.1),
        ] {
            let adv = run_attack(&ConstantModel, &x, &labels, &cfg).unwrap();
            assert_eq!(adv.data(), x.data(), "{:?}", cfg.kind);
        }
    }

    #[test]
    fn attacks_do_not_mutate_the_input() {
        let model = linear_model(6, 25);
        let x = random_x(2, 6, 26);
        let snapshot = x.data().to_vec();
        let _ = run_attack(&model, &x, &[0, 1], &AttackConfig::new(AttackKind::Pgd, 0.05)).unwrap();
        assert_eq!(x.data(), snapshot.as_slice());
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig { epsilon: -0.1, ..AttackConfig::new(AttackKind::Fgsm, 0.0) }
            .validate()
            .is_err());
        assert!(AttackConfig { steps: 0, ..AttackConfig::new(AttackKind::Bim, 0.1) }
            .validate()
            .is_err());
        assert!(AttackKind::parse("carlini").is_err());
        assert_eq!(AttackKind::parse("pgd").unwrap(), AttackKind::Pgd);
    }
}
