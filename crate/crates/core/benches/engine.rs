//! Sequential versus rayon dispatch for the two embarrassingly parallel
//! workloads: sampled-environment trajectories and telegraph-noise
//! realizations. Build with `--no-default-features` to see the fallback
//! path on both arms.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use oqsim_core::engine::{self, Backend, EvolveResetConfig, Mode, TrotterPlan};
use oqsim_core::env_model::{thermal_env, CouplingMethod};
use oqsim_core::exec::Execution;
use oqsim_core::hamiltonian::SystemSpec;
use oqsim_core::noise::{self, DephasingConfig, Fluctuator, NoiseChannel};
use oqsim_core::qmath::Pauli;
use oqsim_core::verify::{excited_state, plus_state, WorkedExample};

const ARMS: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn trajectories(c: &mut Criterion) {
    let ex = WorkedExample::standard();
    let couplings = ex.couplings(&CouplingMethod::ImprovedNonNegative { tau: ex.tau }).unwrap();
    let env = thermal_env(&ex.grid, ex.beta).unwrap();
    let sys = SystemSpec::two_level(ex.omega_s);
    let mut group = c.benchmark_group("trajectories_64x8_sweeps");
    group.sample_size(10);
    for (name, exec) in ARMS {
        let cfg = EvolveResetConfig::new(ex.tau, 8)
            .with_mode(Mode::Sequential { subset_size: 2 })
            .with_backend(Backend::Trajectories { count: 64, seed: 1 })
            .with_exec(exec);
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| {
                engine::simulate(&sys, &ex.grid, &couplings, &env, &excited_state(), cfg, TrotterPlan::default()).unwrap()
            })
        });
    }
    group.finish();
}

fn dephasing(c: &mut Criterion) {
    let fs = noise::sample_one_over_f(1e-2, 1e1, 20, 0.05, 3).unwrap();
    let channel = NoiseChannel { op: Pauli::Z.matrix(), fluctuators: fs };
    let h = Pauli::Z.matrix().scale(-0.5);
    let mut group = c.benchmark_group("dephasing_256_realizations");
    group.sample_size(10);
    for (name, exec) in ARMS {
        let cfg = DephasingConfig { duration: 50.0, dt: 0.05, realizations: 256, seed: 5, stride: 10, exec };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| noise::dephasing_run(&h, black_box(std::slice::from_ref(&channel)), &plus_state(), cfg).unwrap())
        });
    }
    group.finish();
}

fn single_fluctuator_signal(c: &mut Criterion) {
    let f = [Fluctuator::new(1.0, 1.0).unwrap()];
    c.bench_function("telegraph_signal_1e5_samples", |b| {
        b.iter(|| noise::generate_telegraph(black_box(&f), 5000.0, 0.05, 9).unwrap())
    });
}

criterion_group!(benches, trajectories, dephasing, single_fluctuator_signal);
criterion_main!(benches);
