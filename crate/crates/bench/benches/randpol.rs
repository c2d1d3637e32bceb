use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use randpol_bench::{rng, Problem};
use randpol_core::driver::randpol_iteration;
use randpol_core::{fit_q, improve_policy};

fn features(c: &mut Criterion) {
    let p = Problem::linear_quadratic();
    let fs = p.q_features(1);
    let z = [0.3, -0.2, 1.1];
    let w = vec![0.01; fs.len()];
    c.bench_function("features/eval_j20_d3", |b| b.iter(|| fs.eval(black_box(&z)).unwrap()));
    c.bench_function("features/combine_j20_d3", |b| b.iter(|| fs.combine(black_box(&w), black_box(&z))));
}

fn critic(c: &mut Criterion) {
    for (name, p) in [("synthetic", Problem::synthetic()), ("lq", Problem::linear_quadratic())] {
        let batch = p.batch(2);
        let fs = p.q_features(3);
        c.bench_function(&format!("fit_q/{name}_n100_j20"), |b| {
            b.iter(|| fit_q(black_box(&batch), fs.clone(), p.res.c_bound, &p.cfg.lsq))
        });
    }
}

fn actor(c: &mut Criterion) {
    let mut group = c.benchmark_group("improve_policy");
    group.sample_size(20);
    for (name, p) in [("synthetic", Problem::synthetic()), ("lq", Problem::linear_quadratic())] {
        let q = p.fitted_q(4);
        let states = p.states(5);
        let class = p.policy_class(6);
        group.bench_function(format!("{name}_n100_j20"), |b| {
            b.iter_batched(
                || rng(7),
                |mut r| improve_policy(&q, &states, &class, &p.cfg.actor, None, &mut r).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("randpol_iteration");
    group.sample_size(10);
    let p = Problem::synthetic();
    let (q, pi) = p.initial();
    group.bench_function("synthetic_default", |b| {
        b.iter_batched(
            || (rng(8), rng(9)),
            |(mut r, mut d)| randpol_iteration(&p.env, &q, &pi, &p.cfg, &p.res, None, &mut r, &mut d).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, features, critic, actor, iteration);
criterion_main!(benches);
