use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use penflow::experiments::rotors::{AmplitudeSchedule, RotorsProblem};
use penflow::experiments::MeshSource;
use penflow::fem::assemble_constant_operators;
use penflow::linalg::Factorizer;
use penflow::stats::step_records;
use penflow::stepper::StepReport;
use penflow::{EnsembleSolver, EnsembleState, FunctionSpace, SchemeParams};

fn rotors_space() -> Arc<FunctionSpace> {
    let mesh = MeshSource::Builtin("rotors_coarse".into()).load().unwrap();
    Arc::new(FunctionSpace::new(Arc::new(mesh)))
}

fn problem() -> RotorsProblem {
    RotorsProblem {
        scales: vec![1.01, 0.98],
        amplitude: 5.0,
        schedule: AmplitudeSchedule::default(),
    }
}

fn bench_solver(c: &mut Criterion) {
    let space = rotors_space();
    let data = problem();
    let params = SchemeParams::new(0.02, 0.001, 1.0);

    c.bench_function("assemble_constant_operators/rotors_coarse", |b| {
        b.iter(|| assemble_constant_operators(black_box(&space)))
    });

    let mut solver = EnsembleSolver::new(space.clone(), params, &data).unwrap();
    let mut state = EnsembleState::new(&space, vec![space.zero_velocity(); 2], 0.0, 0.001).unwrap();
    // a few steps so the mean flow is nonzero
    for _ in 0..5 {
        solver.step(&mut state, &data).unwrap();
    }

    let system = solver.build_system(state.mean(), 0.001).unwrap();
    let mut factorizer = Factorizer::new();
    c.bench_function("factorize/rotors_coarse", |b| {
        b.iter(|| {
            let f = factorizer.factorize(black_box(&system)).unwrap();
            factorizer.recycle(f);
        })
    });

    c.bench_function("ensemble_step/rotors_coarse/J=2", |b| {
        b.iter_batched(
            || state.clone(),
            |mut s| solver.step(&mut s, &data).unwrap(),
            BatchSize::LargeInput,
        )
    });

    let previous: Vec<_> = state.velocities().cloned().collect();
    let report = StepReport {
        state: &state,
        previous: &previous,
        dt: 0.001,
        cfl: 0.0,
    };
    c.bench_function("step_records/rotors_coarse/J=2", |b| {
        b.iter(|| step_records(&space, black_box(&report), 0.02, 0.001).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_solver
}
criterion_main!(benches);
