//! Small end-to-end runs through the public API.

use std::path::Path;

use deskrace::config::ExperimentConfig;
use deskrace::distill::{train_student, train_student_from, StudentConfig};
use deskrace::eval::{evaluate, EvalParams};
use deskrace::nn::{checkpoint, ConvSpec, NetSpec};
use deskrace::parallel::{self, Exec};
use deskrace::ppo::{collect_observations, train_teacher, TeacherConfig, TeacherOutput};
use deskrace::randomize::RandConfig;
use deskrace::render::{Camera, ObservationStore, Renderer};
use deskrace::sim::Environment;

fn tiny() -> (Environment, ExperimentConfig) {
    let mut cfg = ExperimentConfig::desk();
    cfg.camera = Camera::default().with_resolution(24, 32);
    cfg.net = NetSpec {
        input_height: 24,
        input_width: 32,
        convs: vec![ConvSpec { channels: 4, kernel: 4, stride: 2 }],
        hidden: vec![16],
        outputs: cfg.actions.len(),
    };
    cfg.teacher = TeacherConfig {
        iterations: 2,
        episodes_per_iteration: 2,
        epochs: 1,
        minibatch: 64,
        ..TeacherConfig::desk()
    };
    cfg.student = StudentConfig {
        iterations: 2,
        train_size: 40,
        minibatch: 20,
        ..StudentConfig::desk()
    };
    let env = Environment {
        track: deskrace::sim::Track::default_loop(),
        renderer: Renderer::new(cfg.camera),
        actions: cfg.actions.clone(),
        vehicle: cfg.vehicle,
        limits: cfg.limits,
        reward: cfg.reward,
    };
    (env, cfg)
}

fn repo_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn shipped_configs_match_presets_and_round_trip() {
    for (file, preset) in [("configs/desk.json", ExperimentConfig::desk()), ("configs/full.json", ExperimentConfig::full())] {
        let loaded = ExperimentConfig::load(&repo_file(file)).unwrap();
        assert_eq!(loaded, preset, "{file}");
        let dir = tempfile::tempdir().unwrap();
        let again = dir.path().join("again.json");
        loaded.save(&again).unwrap();
        let reloaded = ExperimentConfig::load(&again).unwrap();
        assert_eq!(reloaded, loaded);
        assert_eq!(reloaded.to_json(), loaded.to_json());
        assert_eq!(reloaded.hash(), loaded.hash());
    }
    let mut desk = ExperimentConfig::desk();
    desk.track = repo_file("tracks/default.json");
    desk.validate().unwrap();
}

#[test]
fn sequential_and_parallel_runs_are_bit_identical() {
    let (env, cfg) = tiny();
    let run = |mode| {
        parallel::set_mode(mode);
        let teacher = train_teacher(&env, &cfg.train_domain, &cfg.net, &cfg.teacher, 7, &TeacherOutput::default()).unwrap();
        let policy = teacher.model.policy;
        let store = collect_observations(&[&policy], &env, &cfg.train_domain, 120, 40, 8).unwrap();
        let student = train_student(&policy, &store, &cfg.student, 9).unwrap();
        let report = evaluate(&student.student, &env, &cfg.test_domain, &EvalParams { trials: 3, ..cfg.eval }, "s").unwrap();
        (policy, store.encode(), student.student, student.log, report)
    };
    let seq = run(Exec::Sequential);
    let par = run(Exec::Parallel);
    parallel::set_mode(Exec::Parallel);
    assert_eq!(seq.0, par.0);
    assert_eq!(seq.1, par.1);
    assert_eq!(seq.2, par.2);
    assert_eq!(seq.3, par.3);
    assert_eq!(seq.4, par.4);
}

#[test]
fn artifacts_round_trip_through_disk() {
    let (env, cfg) = tiny();
    let dir = tempfile::tempdir().unwrap();
    let out = TeacherOutput {
        dir: Some(dir.path().join("teacher")),
        snapshots: vec![2],
    };
    let run = train_teacher(&env, &cfg.train_domain, &cfg.net, &cfg.teacher, 3, &out).unwrap();
    assert_eq!(run.checkpoints.len(), 2);
    assert!(run.checkpoints[1].ends_with("iteration_0002.rdnn"));
    let (loaded, meta) = checkpoint::load(&run.checkpoints[1]).unwrap();
    assert_eq!(loaded, run.model.policy);
    assert_eq!(loaded, run.snapshots[0].1);
    assert_eq!(meta.iteration, Some(2));
    let csv = std::fs::read_to_string(dir.path().join("teacher/training_log.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let store = collect_observations(&[&loaded], &env, &cfg.train_domain, 100, 30, 4).unwrap();
    let path = dir.path().join("obs/o.robs");
    store.save(&path).unwrap();
    let back = ObservationStore::load(&path).unwrap();
    assert_eq!(back.frames(), store.frames());
    assert_eq!(back.meta(), store.meta());
}

#[test]
fn student_copy_of_teacher_without_randomization_has_zero_loss() {
    let (env, cfg) = tiny();
    let teacher = train_teacher(&env, &cfg.train_domain, &cfg.net, &cfg.teacher, 5, &TeacherOutput::default())
        .unwrap()
        .model
        .policy;
    let store = collect_observations(&[&teacher], &env, &cfg.train_domain, 80, 40, 6).unwrap();
    let sc = StudentConfig {
        randomization: RandConfig::none(),
        ..cfg.student.clone()
    };
    let run = train_student_from(teacher.clone(), &teacher, &store, &sc, 1).unwrap();
    assert!(run.log.iter().all(|l| l.mean_loss == 0.0));
    assert_eq!(run.student, teacher);
    assert_eq!(run.teacher_path_apply_calls, 0);
}
