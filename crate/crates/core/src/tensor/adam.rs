//! Adam optimizer with bias correction.

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f32) -> Self {
        AdamHyper { lr, ..Default::default() }
    }
}

/// First/second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over an ordered parameter list. Gradients are read from
/// each tensor's own grad store; tensors without a gradient are skipped.
/// Parameter order must be stable across calls (state is matched by index).
pub fn adam_step(params: &mut [&mut Tensor], state: &mut AdamState, hp: &AdamHyper) -> Result<()> {
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        state.v = params.iter().map(|p| vec![0.0; p.numel()]).collect();
    }
    if state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam_step: state holds {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        if state.m[i].len() != p.numel() {
            return Err(Error::Shape(format!(
                "adam_step: state slot {i} sized {} but parameter has {} elements",
                state.m[i].len(),
                p.numel()
            )));
        }
        let Some(grad) = p.grad() else { continue };
        let grad = grad.to_vec();
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let data = p.data_mut();
        for j in 0..data.len() {
            let g = grad[j];
            m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g;
            v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            data[j] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::new(vec![1.0, 2.0], &[2]).unwrap().with_grad();
        p.accumulate_grad(&[0.0, 0.0]);
        let mut state = AdamState::new();
        adam_step(&mut [&mut p], &mut state, &AdamHyper::default()).unwrap();
        assert_eq!(p.data(), &[1.0, 2.0]);
    }

    #[test]
    fn single_step_matches_closed_form() {
        // After one step with constant gradient g: m_hat = g, v_hat = g^2,
        // so the update is lr * g / (|g| + eps) ≈ lr * sign(g).
        let hp = AdamHyper::with_lr(0.01);
        let mut p = Tensor::new(vec![5.0, -3.0], &[2]).unwrap().with_grad();
        p.accumulate_grad(&[0.4, -2.0]);
        let mut state = AdamState::new();
        adam_step(&mut [&mut p], &mut state, &hp).unwrap();
        let expected0 = 5.0 - 0.01 * 0.4 / (0.4 + 1e-8);
        let expected1 = -3.0 + 0.01 * 2.0 / (2.0 + 1e-8);
        assert!((p.data()[0] - expected0).abs() < 1e-6);
        assert!((p.data()[1] - expected1).abs() < 1e-6);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut p = Tensor::new(vec![0.5, 0.25], &[2]).unwrap().with_grad();
            let mut state = AdamState::new();
            for step in 0..10 {
                p.zero_grad();
                let d0 = p.data()[0];
                let d1 = p.data()[1];
                p.accumulate_grad(&[d0 * 0.1 + step as f32 * 0.01, d1 - 0.3]);
                adam_step(&mut [&mut p], &mut state, &AdamHyper::default()).unwrap();
            }
            p.data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mismatched_state_size_errors() {
        let mut a = Tensor::zeros(&[2]).with_grad();
        let mut b = Tensor::zeros(&[2]).with_grad();
        let mut state = AdamState::new();
        adam_step(&mut [&mut a], &mut state, &AdamHyper::default()).unwrap();
        assert!(adam_step(&mut [&mut a, &mut b], &mut state, &AdamHyper::default()).is_err());
    }
}
