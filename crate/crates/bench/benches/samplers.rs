use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use memwalk::rng::stream;
use memwalk::{FbmMethod, FbmSampler, InnovationModel, Kernel, MemoryFunction, TimeGrid, WalkSimulator};

fn fbm(c: &mut Criterion) {
    let mut group = c.benchmark_group("fbm");
    for n in [256usize, 1024] {
        let grid = TimeGrid::new(n).unwrap();
        for (name, method) in [("cholesky", FbmMethod::Cholesky), ("circulant", FbmMethod::Circulant)] {
            let sampler = FbmSampler::new(grid, 0.7, method).unwrap();
            let mut rng = stream(1, "bench/fbm", 0);
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| b.iter(|| sampler.sample(&mut rng)));
        }
    }
    group.finish();
}

fn walk(c: &mut Criterion) {
    let mut group = c.benchmark_group("walk");
    group.sample_size(20);
    let memory = MemoryFunction::power(1.0).unwrap();
    for n in [1024usize, 8192] {
        let kernel = Kernel::fractional(0.7, 1 << 16, memwalk::Truncation::Override).unwrap();
        let sim = WalkSimulator::new(&kernel, &memory, InnovationModel::gaussian(), n).unwrap();
        let mut rng = stream(1, "bench/walk", 0);
        group.bench_with_input(BenchmarkId::new("simulate", n), &n, |b, _| b.iter(|| sim.simulate(&mut rng).unwrap()));
        group.bench_with_input(BenchmarkId::new("simulate_s", n), &n, |b, _| {
            b.iter(|| sim.simulate_s(&mut rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, fbm, walk);
criterion_main!(benches);
