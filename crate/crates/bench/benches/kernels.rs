use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ffn_core::convnet::{conv3d_same, ConvLayer, FfnModel, ModelSpec, Tensor, TARGET_OFF, TARGET_ON};
use ffn_core::inference::{euclidean_distance_transform, segment_object, GroundTruthOracle, MovementPolicy};
use ffn_core::synth::{generate_world, SynthConfig};
use ffn_core::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 3], channels: usize) -> Tensor<f32> {
    let n = dims.iter().product::<usize>() * channels;
    Tensor::from_vec(1, dims, channels, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = c.benchmark_group("conv3d_same");
    for (dims, ch) in [([17, 17, 9], 8), ([33, 33, 17], 32)] {
        let input = random_tensor(&mut rng, dims, ch);
        let layer = ConvLayer::init_uniform([3, 3, 3], ch, ch, &mut rng).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(format!("{dims:?}x{ch}")), &input, |b, x| {
            b.iter(|| conv3d_same(black_box(x), &layer, true).unwrap())
        });
    }
    g.finish();
}

fn forward_backward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = ModelSpec::with_default_depth([17, 17, 9], 8);
    let model = FfnModel::<f32>::init(spec, 0).unwrap();
    let input = random_tensor(&mut rng, spec.fov, 2);
    let target = Tensor::from_vec(
        1,
        spec.fov,
        1,
        (0..input.voxels()).map(|i| if i % 3 == 0 { TARGET_ON } else { TARGET_OFF }).collect(),
    )
    .unwrap();
    c.bench_function("forward_backward/17x17x9 C=8", |b| {
        b.iter(|| model.forward_backward(black_box(&input), &target).unwrap())
    });
}

fn oracle_object(c: &mut Criterion) {
    let world = generate_world(&SynthConfig::default()).unwrap();
    let oracle = GroundTruthOracle::new(&world.labels, [33, 33, 17]);
    let seed = world.skeletons[0].nodes[0].position;
    c.bench_function("segment_object/oracle 64x64x32", |b| {
        b.iter(|| segment_object(&world.image, seed, &oracle, &MovementPolicy::default()).unwrap())
    });
}

fn edt(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let features = Grid::from_fn([64, 64, 32], |_| rng.gen_bool(0.02));
    c.bench_function("edt/64x64x32", |b| {
        b.iter(|| euclidean_distance_transform(black_box(&features), [1.0, 1.0, 1.0]))
    });
}

criterion_group!(benches, conv, forward_backward, oracle_object, edt);
criterion_main!(benches);
