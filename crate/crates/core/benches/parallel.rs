//! Sequential versus data-parallel execution of the three hot loops:
//! evaluation rollouts, the PPO minibatch gradient, and teacher logits over
//! an observation store. Both modes compute bit-identical results.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deskrace::config::ExperimentConfig;
use deskrace::distill::teacher_targets;
use deskrace::eval::{evaluate, EvalParams};
use deskrace::nn::glorot_init;
use deskrace::parallel::{self, Exec};
use deskrace::ppo::{ppo_gradient, ActorCritic, RolloutBatch};
use deskrace::render::ObservationStore;
use deskrace::rng::stream;
use deskrace::sim::{Environment, PurePursuit, Track};
use rand::Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn environment(cfg: &ExperimentConfig) -> Environment {
    Environment {
        track: Track::default_loop(),
        renderer: deskrace::render::Renderer::new(cfg.camera),
        actions: cfg.actions.clone(),
        vehicle: cfg.vehicle,
        limits: cfg.limits,
        reward: cfg.reward,
    }
}

fn bench_evaluate(c: &mut Criterion) {
    let cfg = ExperimentConfig::desk();
    let env = environment(&cfg);
    let net = glorot_init(&cfg.net, 1).unwrap();
    let params = EvalParams { trials: 8, ..cfg.eval };
    let mut group = c.benchmark_group("evaluate_8_trials");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            parallel::set_mode(mode);
            b.iter(|| evaluate(&net, &env, &cfg.train_domain, &params, "bench").unwrap())
        });
    }
    group.finish();
}

fn bench_ppo_gradient(c: &mut Criterion) {
    let cfg = ExperimentConfig::desk();
    let model = ActorCritic::new(&cfg.net, 2).unwrap();
    let mut rng = stream(3, &[]);
    let m = cfg.teacher.minibatch;
    let input_len = cfg.net.input_len();
    let batch = RolloutBatch {
        input_len,
        inputs: (0..m * input_len).map(|_| rng.random_range(0.0..1.0)).collect(),
        actions: (0..m).map(|_| rng.random_range(0..cfg.net.outputs)).collect(),
        log_probs: vec![-(cfg.net.outputs as f64).ln(); m],
        advantages: (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
        returns: (0..m).map(|_| rng.random_range(-5.0..5.0)).collect(),
    };
    let indices: Vec<usize> = (0..m).collect();
    let mut group = c.benchmark_group("ppo_gradient_minibatch");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            parallel::set_mode(mode);
            b.iter(|| ppo_gradient(&model, &batch, &indices, cfg.teacher.clip, 0.01, cfg.teacher.value_coef, cfg.teacher.grad_chunk).unwrap())
        });
    }
    group.finish();
}

fn bench_teacher_targets(c: &mut Criterion) {
    let cfg = ExperimentConfig::desk();
    let env = environment(&cfg);
    let mut driver = PurePursuit {
        actions: cfg.actions.clone(),
        speed: 1.25,
        lookahead: 0.4,
        wheelbase: cfg.vehicle.wheelbase,
    };
    let mut store = ObservationStore::new(cfg.train_domain.id.clone());
    let traj = env.run_episode(&mut driver, &cfg.train_domain, &mut stream(4, &[]));
    for (i, step) in traj.steps.iter().take(200).enumerate() {
        let obs = env.renderer.render(&env.track, &step.state, &cfg.train_domain);
        store.push(deskrace::render::Observation { frame_id: i as u64, ..obs }).unwrap();
    }
    let teacher = glorot_init(&cfg.net, 5).unwrap();
    let mut group = c.benchmark_group("teacher_targets_200_frames");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            parallel::set_mode(mode);
            b.iter(|| teacher_targets(&teacher, &store, store.len(), cfg.student.grad_chunk).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_evaluate, bench_ppo_gradient, bench_teacher_targets);
criterion_main!(benches);
