//! Shared helpers for integration tests: a central-finite-difference
//! gradient checker independent of the autodiff path, and criterion
//! pass/fail reporting.
#![allow(dead_code)] // shared across test binaries; not all use every helper

use dasm_core::tensor::{Graph, NodeId, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Runs one numbered acceptance criterion, printing a single PASS/FAIL line.
pub fn criterion<F: FnOnce() + std::panic::UnwindSafe>(number: usize, name: &str, body: F) {
    match std::panic::catch_unwind(body) {
        Ok(()) => println!("ACCEPTANCE {number} ({name}): PASS"),
        Err(payload) => {
            println!("ACCEPTANCE {number} ({name}): FAIL");
            std::panic::resume_unwind(payload);
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], lo: f32, hi: f32, rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data: Vec<f32> = (0..numel).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(data, shape).unwrap().with_grad()
}

/// Vector-norm relative error between analytic and finite-difference
/// gradients: ‖a − fd‖₂ / max(‖a‖₂, ‖fd‖₂, floor).
pub fn rel_error(analytic: &[f32], fd: &[f32]) -> f64 {
    let norm = |v: &[f32]| v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    let diff: Vec<f32> = analytic.iter().zip(fd).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(fd)).max(1e-10)
}

/// Central-finite-difference gradient check.
///
/// `build` must deterministically reconstruct the computation from the given
/// inputs and return ONE node (any shape); the harness projects it to a
/// scalar through a fixed random linear functional so every output element
/// influences the loss. The projection is evaluated in f64 so the checker's
/// own reduction does not drown the finite differences in f32 round-off (the
/// op under test still runs in f32). Checks the gradient w.r.t. every input
/// tensor and returns the worst relative error across inputs.
pub fn gradcheck<F>(build: F, inputs: &[Tensor], h: f32, proj_seed: u64) -> f64
where
    F: Fn(&mut Graph, &[NodeId]) -> NodeId,
{
    let run = |inputs: &[Tensor]| -> (f64, Vec<NodeId>, Graph) {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t)).collect();
        let out = build(&mut g, &ids);
        let out_len = g.value(out).len();
        let mut prng = rng(proj_seed);
        let weights: Vec<f32> = (0..out_len).map(|_| prng.random_range(-1.0f32..1.0)).collect();
        let value: f64 = g
            .value(out)
            .iter()
            .zip(&weights)
            .map(|(&o, &w)| o as f64 * w as f64)
            .sum();
        let shape = g.shape(out).to_vec();
        let w = g.constant(weights, &shape);
        let prod = g.mul(out, w).unwrap();
        let loss = g.sum(prod);
        g.backward(loss).unwrap();
        (value, ids, g)
    };

    let (_, ids, graph) = run(inputs);
    let mut worst = 0.0f64;
    for (slot, input) in inputs.iter().enumerate() {
        if !input.requires_grad() {
            continue;
        }
        let analytic: Vec<f32> = graph
            .grad(ids[slot])
            .map(|s| s.to_vec())
            .unwrap_or_else(|| vec![0.0; input.numel()]);
        let mut fd = vec![0.0f32; input.numel()];
        let mut probe: Vec<Tensor> = inputs.to_vec();
        for (i, fd_slot) in fd.iter_mut().enumerate() {
            let orig = probe[slot].data()[i];
            probe[slot].data_mut()[i] = orig + h;
            let up = run(&probe).0;
            probe[slot].data_mut()[i] = orig - h;
            let down = run(&probe).0;
            probe[slot].data_mut()[i] = orig;
            *fd_slot = ((up - down) / (2.0 * h as f64)) as f32;
        }
        worst = worst.max(rel_error(&analytic, &fd));
    }
    worst
}
