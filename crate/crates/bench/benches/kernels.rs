use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fcl_core::diagnostics::energy_report;
use fcl_core::solver::{self, Problem};
use fcl_core::{ForchheimerPolynomial, SimulationConfig};

fn constitutive(c: &mut Criterion) {
    let g = ForchheimerPolynomial::new(vec![1.0, 1.0, 0.5], vec![0.0, 1.0, 2.0]).unwrap();
    let xs: Vec<f64> = (0..256).map(|k| 10f64.powf(-4.0 + 8.0 * k as f64 / 255.0)).collect();
    c.bench_function("invert_darcy_law/256", |b| {
        b.iter(|| xs.iter().map(|&x| g.invert_darcy_law(black_box(x)).unwrap()).sum::<f64>())
    });
    c.bench_function("h_closed_form/256", |b| b.iter(|| xs.iter().map(|&x| g.h(black_box(x)).unwrap()).sum::<f64>()));
    c.bench_function("h_quadrature/256", |b| {
        b.iter(|| xs.iter().map(|&x| g.h_quadrature(black_box(x)).unwrap()).sum::<f64>())
    });
}

fn solver_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("backward_euler_step");
    for n in [16, 32, 64] {
        let p = Problem::from_config(&SimulationConfig::reference(n)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &p, |b, p| {
            b.iter(|| solver::step(&p.grid, black_box(&p.initial), &p.params, &p.controls).unwrap())
        });
    }
    group.finish();
}

fn energy(c: &mut Criterion) {
    let p = Problem::from_config(&SimulationConfig::reference(64)).unwrap();
    let s = &p.initial;
    c.bench_function("energy_report/64", |b| {
        b.iter(|| energy_report(&p.grid, &p.params, s.t, black_box(&s.u), &s.v, &s.u).unwrap())
    });
}

criterion_group!(benches, constitutive, solver_step, energy);
criterion_main!(benches);
