use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use meshlab_core::calibration::{calibrate_mesh, CalibrationOptions, Noise, VirtualDevice};
use meshlab_core::compiler::{reck_decompose, Tolerances};
use meshlab_core::quantum::permanent;
use meshlab_core::{forward, CellSetting, FabricationModel, MeshSettings, Topology, TransferMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn forward_eval(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("forward");
    for (name, topo) in [("triangular8", Topology::Triangular { d: 8 }), ("blass8", Topology::Blass { d: 8 })] {
        let config = FabricationModel::default().sample_mesh(topo, &mut rng).unwrap();
        let mut settings = MeshSettings::uniform(topo, CellSetting::BAR).unwrap();
        for cell in topo.cell_order() {
            settings.set(cell, CellSetting::new(rng.random_range(0.0..3.0), rng.random_range(0.0..6.0))).unwrap();
        }
        group.bench_function(name, |b| b.iter(|| forward(black_box(&config), black_box(&settings)).unwrap()));
    }
    group.finish();
}

fn reck(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("reck_decompose");
    for d in [4, 8, 16] {
        let u = TransferMatrix::haar_unitary(d, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(d), &u, |b, u| {
            b.iter(|| reck_decompose(black_box(u), &Tolerances::default()).unwrap())
        });
    }
    group.finish();
}

fn permanents(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut group = c.benchmark_group("permanent");
    for n in [4, 8, 12] {
        let m = TransferMatrix::haar_unitary(n, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| b.iter(|| permanent(black_box(m)).unwrap()));
    }
    group.finish();
}

fn calibration(c: &mut Criterion) {
    let mut group = c.benchmark_group("calibrate_mesh");
    group.sample_size(10);
    let opts = CalibrationOptions { points: 20, ..Default::default() };
    group.bench_function("blass4", |b| {
        b.iter(|| {
            let mut dev = VirtualDevice::sample(4, &FabricationModel::default(), 7, Noise::Poisson).unwrap();
            calibrate_mesh(&mut dev, &opts).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, forward_eval, reck, permanents, calibration);
criterion_main!(benches);
