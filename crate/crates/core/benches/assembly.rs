//! Sequential vs rayon for the data-parallel loops: quadrature assembly and the `k_A` band scan.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use fracobs::discretization::{assemble_stiffness_symmetric_with, assemble_stiffness_with, AssemblyOptions};
use fracobs::exec::Exec;
use fracobs::kernels::{ka_band_scan, sin_cos_kernel, sin_diff_kernel, CoefficientField};
use fracobs::mesh::Mesh;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    group.sample_size(10);
    let nonsym = sin_cos_kernel(0.6).unwrap();
    let sym = sin_diff_kernel(0.6).unwrap();
    for n in [16, 48] {
        let mesh = Mesh::new(-1.0, 1.0, n).unwrap();
        for (name, exec) in POLICIES {
            let opts = AssemblyOptions { exec, exact_fractional: false };
            group.bench_with_input(BenchmarkId::new(format!("nonsymmetric/{name}"), n), &mesh, |b, m| {
                b.iter(|| assemble_stiffness_with(black_box(m), &nonsym, &opts).unwrap())
            });
            group.bench_with_input(BenchmarkId::new(format!("symmetric/{name}"), n), &mesh, |b, m| {
                b.iter(|| assemble_stiffness_symmetric_with(black_box(m), &sym, &opts).unwrap())
            });
        }
    }
    group.finish();
}

fn band_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("ka_band_scan");
    group.sample_size(10);
    let field = CoefficientField::counterexample();
    let pairs: Vec<(f64, f64)> = (0..8).map(|k| (-0.5 + 0.05 * k as f64, 0.5 + 0.1 * k as f64)).collect();
    for (name, exec) in POLICIES {
        group.bench_function(name, |b| b.iter(|| ka_band_scan(&field, 0.8, black_box(&pairs), exec)));
    }
    group.finish();
}

criterion_group!(benches, assembly, band_scan);
criterion_main!(benches);
