//! Sequential vs parallel execution of the three data-parallel workloads:
//! Monte Carlo sampling, exhaustive evaluation and one batched training update.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use metacausal::agents::Agent;
use metacausal::cbn::{enumerate_graphs, CausalGraph, GraphPool, Mechanism};
use metacausal::env::{Condition, Setting, TaskConfig};
use metacausal::gaussian::sample;
use metacausal::par::{self, Exec};
use metacausal::rng;
use metacausal::train_eval::{evaluate, EvalPlan, TrainConfig, Trainer};
use std::hint::black_box;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn monte_carlo(c: &mut Criterion) {
    let g = CausalGraph::from_code(5, 31_337, Mechanism::Linear).unwrap();
    let mut group = c.benchmark_group("monte_carlo_100k");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let sums = par::map_range(exec, 64, |chunk| {
                    let mut r = rng::stream(7, "bench", chunk as u64);
                    (0..1563).map(|_| sample(&g, &mut r, None, None).unwrap().0[4]).sum::<f64>()
                });
                black_box(sums.iter().sum::<f64>())
            })
        });
    }
    group.finish();
}

fn exhaustive_eval(c: &mut Criterion) {
    let graphs: Vec<CausalGraph> = enumerate_graphs(4).unwrap().collect();
    let task = TaskConfig::new(Setting::Counterfactual, Condition::Active, 4);
    let agents = [Agent::OptimalCounterfactual];
    let mut group = c.benchmark_group("exhaustive_eval_n4");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(evaluate(&agents, "cf", &EvalPlan::Exhaustive(&graphs), task, 0, exec).unwrap()))
        });
    }
    group.finish();
}

fn training_update(c: &mut Criterion) {
    let task = TaskConfig::new(Setting::Interventional, Condition::Active, 5);
    let pool = GraphPool::All { n_nodes: 5, mechanism: Mechanism::Linear };
    let cfg = TrainConfig { batch_size: 128, hidden: 64, ..TrainConfig::desk(task, 0) };
    let mut group = c.benchmark_group("train_update_b128");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter_batched(
                || Trainer::new(cfg).unwrap(),
                |mut t| {
                    t.update(&pool, exec).unwrap();
                    black_box(t)
                },
                criterion::BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, exhaustive_eval, training_update);
criterion_main!(benches);
