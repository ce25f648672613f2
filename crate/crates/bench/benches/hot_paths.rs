use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use she_lab_bench::pam;
use she_lab_core::correlation::CorrelationModel;
use she_lab_core::grid::LatticeGrid;
use she_lab_core::kernels::heat_symbol;
use she_lab_core::moments::{h_sequence, HConfig};
use she_lab_core::noise::NoiseSynthesizer;
use she_lab_core::solver::{Member, Simulation};
use she_lab_core::spectral::{plan_for, Workspace};

fn heat_semigroup(c: &mut Criterion) {
    let mut g = c.benchmark_group("heat_semigroup");
    for n in [256usize, 1024, 4096] {
        let grid = LatticeGrid::new(1, 5.12, n).unwrap();
        let plan = plan_for(&grid).unwrap();
        let sym = heat_symbol(&plan, 1e-3);
        let mut u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut ws = Workspace::default();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| plan.apply_symbol(black_box(&mut u), &sym, &mut ws))
        });
    }
    g.finish();
}

fn noise_synthesis(c: &mut Criterion) {
    let mut g = c.benchmark_group("noise_slice");
    let grid = LatticeGrid::new(1, 5.12, 1024).unwrap();
    for (name, model) in [("white", CorrelationModel::white()), ("riesz_0.5", CorrelationModel::riesz(1, 0.5).unwrap())] {
        let synth = NoiseSynthesizer::new(&model, &grid, 1e-3, 1).unwrap();
        let mut out = vec![0.0; grid.cells()];
        let mut ws = Workspace::default();
        let mut step = 0;
        g.bench_function(name, |b| {
            b.iter(|| {
                step += 1;
                synth.fill_slice(0, step, black_box(&mut out), &mut ws)
            })
        });
    }
    g.finish();
}

fn replica(c: &mut Criterion) {
    let sim = Simulation::new(pam(CorrelationModel::white(), 256, 0.1)).unwrap();
    c.bench_function("pam_replica_256x100", |b| {
        let mut r = 0;
        b.iter(|| {
            r += 1;
            let mut m = [Member::new(vec![1.0; 256])];
            sim.run_members(r, &mut m, None, |_, _| true).unwrap();
            black_box(m[0].values[0])
        })
    });
}

fn h_terms(c: &mut Criterion) {
    let cfg = HConfig::default();
    let mut g = c.benchmark_group("h_sequence");
    for (name, model) in [("white", CorrelationModel::white()), ("riesz_0.5", CorrelationModel::riesz(1, 0.5).unwrap())] {
        g.bench_function(name, |b| b.iter(|| h_sequence(&model, black_box(1.0), 40, &cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, heat_semigroup, noise_synthesis, replica, h_terms);
criterion_main!(benches);
