//! Compares the rayon data-parallel core against the sequential fallback on
//! the two hot loops: rollout collection and minibatch gradient accumulation.
//!
//! With the default `parallel` feature the `parallel` entries exercise the
//! rayon path; built with `--no-default-features` they fall back to the same
//! code as the `sequential` entries, so only the default build produces a
//! meaningful comparison.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mmrl::env::{Env, EnvConfig};
use mmrl::net::PolicyParams;
use mmrl::ppo::{
    collect_rollout, collect_rollout_sequential, compute_gae, loss_and_grads,
    loss_and_grads_sequential, EnvSlot, RolloutBatch, UpdateConfig,
};
use mmrl::rng::{mix, salt};
use mmrl::traj::TrajectoryFamily;

const N_ENVS: usize = 8;
const ROLLOUT_STEPS: usize = 100;
const HIDDEN: [usize; 2] = [64, 64];
const RUN_SEED: u64 = 02_2026;

fn pool() -> Vec<EnvSlot> {
    (0..N_ENVS)
        .map(|i| {
            let base = mix(RUN_SEED, mix(i as u64, salt::ENV));
            let env = Env::new(EnvConfig::default(), TrajectoryFamily::Circle, base)
                .expect("default config is valid");
            EnvSlot::new(Box::new(env), RUN_SEED, i)
        })
        .collect()
}

fn params_for(slots: &[EnvSlot]) -> PolicyParams {
    PolicyParams::init(slots[0].env.obs_dim(), slots[0].env.action_dim(), &HIDDEN, RUN_SEED)
}

fn bench_rollout(c: &mut Criterion) {
    let params = params_for(&pool());
    let mut group = c.benchmark_group("rollout");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter_batched(
            pool,
            |mut slots| collect_rollout(&params, &mut slots, ROLLOUT_STEPS).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.bench_function("sequential", |b| {
        b.iter_batched(
            pool,
            |mut slots| collect_rollout_sequential(&params, &mut slots, ROLLOUT_STEPS).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn gae_targets(batch: &RolloutBatch) -> (Vec<f64>, Vec<f64>) {
    let mut advantages = vec![0.0; batch.total_steps()];
    let mut returns = vec![0.0; batch.total_steps()];
    for e in 0..batch.n_envs {
        let rows = batch.env_rows(e);
        let (a, r) = compute_gae(
            &batch.rewards[rows.clone()],
            &batch.values[rows.clone()],
            &batch.dones[rows.clone()],
            batch.bootstrap_values[e],
            0.99,
            0.95,
        );
        advantages[rows.clone()].copy_from_slice(&a);
        returns[rows].copy_from_slice(&r);
    }
    (advantages, returns)
}

fn bench_gradients(c: &mut Criterion) {
    let mut slots = pool();
    let params = params_for(&slots);
    let batch = collect_rollout_sequential(&params, &mut slots, ROLLOUT_STEPS).unwrap();
    let (advantages, returns) = gae_targets(&batch);
    let rows: Vec<usize> = (0..batch.total_steps()).collect();
    let cfg = UpdateConfig {
        clip_eps: 0.2,
        value_coef: 0.5,
        entropy_coef: 0.0,
        grad_clip_norm: 0.5,
        epochs: 1,
        minibatch_size: rows.len(),
    };
    let mut group = c.benchmark_group("gradients");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            loss_and_grads(
                black_box(&params),
                &batch,
                &rows,
                &advantages,
                &returns,
                &cfg,
            )
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            loss_and_grads_sequential(
                black_box(&params),
                &batch,
                &rows,
                &advantages,
                &returns,
                &cfg,
            )
        })
    });
    group.finish();
}

criterion_group!(benches, bench_rollout, bench_gradients);
criterion_main!(benches);
