use criterion::{black_box, criterion_group, criterion_main, Criterion};
use dasm_core::tensor::kernels::{conv2d_backward, conv2d_forward, ConvDims};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn randv(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

fn bench_conv(c: &mut Criterion) {
    let d = ConvDims::validate_conv(&[8, 16, 32, 32], &[32, 16, 3, 3], &[32], 1, 1).unwrap();
    let x = randv(8 * 16 * 32 * 32, 1);
    let k = randv(32 * 16 * 3 * 3, 2);
    let b = randv(32, 3);
    c.bench_function("conv2d fwd 8x16x32x32 -> 32ch", |bencher| {
        bencher.iter(|| conv2d_forward(black_box(&x), black_box(&k), &b, &d))
    });

    let dout = randv(8 * 32 * 32 * 32, 4);
    c.bench_function("conv2d bwd 8x16x32x32 -> 32ch", |bencher| {
        bencher.iter(|| conv2d_backward(black_box(&x), black_box(&k), black_box(&dout), &d))
    });
}

criterion_group!(benches, bench_conv);
criterion_main!(benches);
