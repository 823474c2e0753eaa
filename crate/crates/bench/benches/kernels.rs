use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use incompat_bench::{bent, curved, laws};
use incompat_core::continuum::{qw_upper_estimate, ContinuumDensity, QwOptions};
use incompat_core::energy::EnergyModel;
use incompat_core::geometry::{FiberMap, Mat2, Vec2};
use incompat_core::minimize::{initial_configuration, minimize_config, InitKind, SolveOptions};
use incompat_core::triangulation::{build_lattice, compute_measures, MeasureOptions};

fn lattice(c: &mut Criterion) {
    let g = curved();
    c.bench_function("build_lattice eps=0.025", |b| b.iter(|| build_lattice(g.chart(), g.frame(), 0.025).unwrap()));
    let tri = build_lattice(g.chart(), g.frame(), 0.05).unwrap();
    c.bench_function("compute_measures eps=0.05", |b| {
        b.iter(|| compute_measures(&tri, &g, &MeasureOptions::default()).unwrap())
    });
}

fn energy(c: &mut Criterion) {
    let g = curved();
    let tri = build_lattice(g.chart(), g.frame(), 0.025).unwrap();
    let m = compute_measures(&tri, &g, &MeasureOptions::default()).unwrap();
    let model = EnergyModel::new(&tri, &m, laws()).unwrap();
    let f = bent(&tri.vertices);
    c.bench_function("total energy eps=0.025", |b| b.iter(|| model.total(&f).unwrap()));
    c.bench_function("energy gradient eps=0.025", |b| b.iter(|| model.gradient(&f).unwrap()));
}

fn solve(c: &mut Criterion) {
    let g = curved();
    let tri = build_lattice(g.chart(), g.frame(), 0.1).unwrap();
    let m = compute_measures(&tri, &g, &MeasureOptions::default()).unwrap();
    let init = initial_configuration(&tri, &InitKind::ChartIdentity).unwrap();
    let opts = SolveOptions { multi_start: 1, ..SolveOptions::default() };
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("minimize eps=0.1", |b| {
        b.iter_batched(|| init.clone(), |x| minimize_config(&tri, &m, &laws(), &x, &opts).unwrap(), BatchSize::SmallInput)
    });
    let dens = ContinuumDensity::new(curved(), laws());
    let a = FiberMap::new(Vec2::new(0.4, 0.6), Mat2::new(1.3, 0.2, -0.1, 0.8));
    group.bench_function("qw estimate level 2", |b| {
        b.iter(|| qw_upper_estimate(&a, &dens, 2, &QwOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, lattice, energy, solve);
criterion_main!(benches);
