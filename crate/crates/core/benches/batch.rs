use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lazylink::batch::{run_batch, run_batch_sequential, seed_sweep, RunSpec};
use lazylink::hybridsim::{ClosedLoop, InitialCondition, NoiseKind, PerturbationSpec, SimConfig};
use lazylink::matlib::Matrix;
use lazylink::policy::{design_sync, Policy, TimerParams};
use lazylink::system::{build_error_system, Cascade};

fn base_run() -> RunSpec {
    let m = |r: &[&[f64]]| Matrix::from_rows(r).unwrap();
    let cascade = Cascade::new(
        m(&[&[2.0, 1.5], &[2.0, 0.0]]),
        m(&[&[-18.0], &[0.0]]),
        m(&[&[0.5, 0.5]]),
    )
    .unwrap();
    let err = build_error_system(&cascade).unwrap();
    let policy = design_sync(
        &err,
        &Matrix::identity(2),
        1e-3,
        1e3,
        &m(&[&[0.1]]),
        TimerParams::default(),
    )
    .unwrap();
    RunSpec {
        label: "sync".into(),
        system: ClosedLoop::new(cascade, None),
        policy: Policy::Sync(policy),
        init: InitialCondition {
            x0: vec![1.0, 1.0],
            nu0: vec![0.0],
            xhat0: None,
            tau0: None,
        },
        config: SimConfig {
            t_max: 2.0,
            ..SimConfig::default()
        },
        pert: PerturbationSpec {
            sample_noise_amp: 0.1,
            noise_kind: NoiseKind::Uniform,
            ..PerturbationSpec::default()
        },
    }
}

fn bench_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("seed_sweep");
    group.sample_size(10);
    for runs in [4u64, 16] {
        let specs = seed_sweep(&base_run(), &(0..runs).collect::<Vec<_>>());
        group.bench_with_input(BenchmarkId::new("sequential", runs), &specs, |b, s| {
            b.iter(|| run_batch_sequential(s))
        });
        group.bench_with_input(BenchmarkId::new("batch", runs), &specs, |b, s| {
            b.iter(|| run_batch(s))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_batch);
criterion_main!(benches);
