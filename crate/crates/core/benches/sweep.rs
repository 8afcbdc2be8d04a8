use criterion::{criterion_group, criterion_main, BatchSize as BenchBatch, Criterion};
use std::hint::black_box;

use xorp_core::dataset::{sample_batch, ProblemSpec};
use xorp_core::network::{self, init_params};
use xorp_core::seed::trial_rng;
use xorp_core::sweep::{run_sweep_with, SweepOptions, SweepSpec};
use xorp_core::{ActivationKind, Execution, InitBias, OptimizerKind};

fn small_sweep() -> SweepSpec {
    SweepSpec {
        primes: vec![2, 3],
        optimizers: vec![OptimizerKind::from_name("adam").unwrap()],
        activations: vec![ActivationKind::Elu, ActivationKind::Tanh],
        lrs: vec![0.1],
        trials_per_cell: 4,
        min_successes: 2,
        max_epochs: 400,
        ..SweepSpec::default()
    }
}

fn sweep_execution(c: &mut Criterion) {
    let spec = small_sweep();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, execution) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| {
                let opts = SweepOptions {
                    execution: Some(execution),
                    ..SweepOptions::default()
                };
                black_box(run_sweep_with(&spec, &opts).unwrap())
            })
        });
    }
    group.finish();
}

fn forward_backward(c: &mut Criterion) {
    let p = 11;
    let mut rng = trial_rng(1);
    let params = init_params(p, p, &mut rng, 1.0, InitBias::Gaussian).unwrap();
    let batch = sample_batch(&ProblemSpec::new(p).unwrap(), &mut rng);
    c.bench_function("forward_backward_p11", |b| {
        b.iter_batched(
            || batch.clone(),
            |batch| {
                let cache =
                    network::forward(&params, ActivationKind::Elu, batch.inputs.view()).unwrap();
                black_box(network::backward(
                    &params,
                    ActivationKind::Elu,
                    &cache,
                    &batch.labels,
                ))
            },
            BenchBatch::SmallInput,
        )
    });
}

criterion_group!(benches, sweep_execution, forward_backward);
criterion_main!(benches);
