//! Hot kernels on the default rayon pool versus a single-thread pool.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fieldlab::classical::{hj_residuals, BoundaryData};
use fieldlab::evolve::{evolve, EvolveParams, Method};
use fieldlab::feynman::{Kernel, PathIntegralSpec, TransferOperator};
use fieldlab::lagrangian::{legendre_transform, LagrangianSpec};
use fieldlab::lattice::{free_ground_state_covariance, init_wavefunctional, LatticeConfig};
use fieldlab::operator::{compile_hamiltonian, CompileOptions, DerivativeScheme};
use rayon::ThreadPool;

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let build = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    vec![("parallel", build(0)), ("sequential", build(1))]
}

fn kernels(c: &mut Criterion) {
    let lagr = LagrangianSpec::scalar(1.0, 0.1);
    let cfg = LatticeConfig::new(3, 1.0, 32, 8.0, 1.0).unwrap();
    let op = compile_hamiltonian(&legendre_transform(&lagr).unwrap(), &cfg, None, CompileOptions::default()).unwrap();
    let mut init = free_ground_state_covariance(&cfg, 1.0).unwrap();
    init.center = vec![0.4, -0.2, 0.1];
    let psi = init_wavefunctional(&init, &cfg).unwrap();
    let spec = PathIntegralSpec {
        steps: 0,
        dt: 0.05,
        kernel: Kernel::FresnelExact,
        scheme: DerivativeScheme::default(),
    };
    let transfer = TransferOperator::new(&lagr, &cfg, &spec).unwrap();
    let bd = BoundaryData::flat(1.0, 1.0, vec![0.3, -0.2, 0.1, 0.0], vec![0.1, 0.5, -0.3, 0.2]);

    let mut group = c.benchmark_group("kernels");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new("hamiltonian_apply", label), |b| {
            b.iter(|| pool.install(|| black_box(op.apply(&psi.amps))))
        });
        group.bench_function(BenchmarkId::new("crank_nicolson_10", label), |b| {
            let params = EvolveParams::new(1e-2, 10, Method::CrankNicolson);
            b.iter(|| pool.install(|| black_box(evolve(&op, &psi, &params).unwrap())))
        });
        group.bench_function(BenchmarkId::new("transfer_apply", label), |b| {
            b.iter(|| pool.install(|| black_box(transfer.apply_state(&psi).unwrap())))
        });
        group.bench_function(BenchmarkId::new("hj_residuals", label), |b| {
            b.iter(|| pool.install(|| black_box(hj_residuals(&bd, &lagr, 1e-2, 1e-4).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
