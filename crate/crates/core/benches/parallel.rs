//! Sequential versus worker-pool execution of the two parallel hot paths:
//! rollout collection and the sharded policy gradient.

use criterion::{criterion_group, criterion_main, Criterion};

use multigait::camp::{CampDataset, ReferenceConfig};
use multigait::config::RunConfig;
use multigait::parallel::Executor;
use multigait::trainer::Trainer;

fn config() -> RunConfig {
    let mut c = RunConfig::default();
    c.num_envs = 16;
    c.ppo.horizon = 8;
    c
}

fn executors() -> Vec<(&'static str, Executor)> {
    vec![
        ("sequential", Executor::sequential()),
        ("parallel_4", Executor::new(4).expect("worker pool")),
    ]
}

fn rollout(c: &mut Criterion) {
    let data = CampDataset::build(&ReferenceConfig::default()).unwrap();
    let mut group = c.benchmark_group("rollout_16x8");
    group.sample_size(10);
    for (name, exec) in executors() {
        let mut trainer = Trainer::new(config(), data.clone(), exec).unwrap();
        group.bench_function(name, |b| b.iter(|| trainer.collect_rollout().unwrap()));
    }
    group.finish();
}

fn gradient(c: &mut Criterion) {
    let data = CampDataset::build(&ReferenceConfig::default()).unwrap();
    let mut group = c.benchmark_group("policy_gradient_128_rows");
    group.sample_size(10);
    for (name, exec) in executors() {
        let mut trainer = Trainer::new(config(), data.clone(), exec).unwrap();
        let batch = trainer.collect_rollout().unwrap();
        let rows = batch.all_rows();
        let adv: Vec<f64> = rows.iter().map(|&k| ((k % 7) as f64 - 3.0) / 3.0).collect();
        let targets = batch.values.clone();
        group.bench_function(name, |b| b.iter(|| trainer.gradient(&batch, &rows, &adv, &targets).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, rollout, gradient);
criterion_main!(benches);
