use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn deskrace(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deskrace"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Desk config shrunk so that every stage takes a few seconds.
fn tiny_config(dir: &Path) -> PathBuf {
    let mut cfg: Value = serde_json::from_slice(&fs::read(repo_root().join("configs/desk.json")).unwrap()).unwrap();
    fs::create_dir_all(dir.join("tracks")).unwrap();
    fs::copy(repo_root().join("tracks/default.json"), dir.join("tracks/default.json")).unwrap();
    cfg["camera"]["width"] = json!(32);
    cfg["camera"]["height"] = json!(24);
    cfg["net"] = json!({
        "input_height": 24,
        "input_width": 32,
        "convs": [{"channels": 4, "kernel": 4, "stride": 2}],
        "hidden": [16],
        "outputs": 21
    });
    cfg["teacher"]["iterations"] = json!(3);
    cfg["teacher"]["episodes_per_iteration"] = json!(2);
    cfg["teacher"]["epochs"] = json!(1);
    cfg["teacher"]["minibatch"] = json!(64);
    cfg["collect"] = json!({"target_count": 300, "sample_count": 60});
    cfg["student"]["iterations"] = json!(1);
    cfg["student"]["train_size"] = json!(60);
    cfg["student"]["minibatch"] = json!(30);
    cfg["eval"]["trials"] = json!(2);
    cfg["ablation_checkpoints"] = json!([2, 3]);
    cfg["output_dir"] = json!("out");
    let path = dir.join("tiny.json");
    fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).expect("manifest present")).unwrap()
}

#[test]
fn missing_track_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_slice(&fs::read(repo_root().join("configs/desk.json")).unwrap()).unwrap();
    cfg["track"] = json!("nowhere/track.json");
    fs::write(tmp.path().join("c.json"), cfg.to_string()).unwrap();
    let out = deskrace(tmp.path(), &["train-teacher", "--config", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("track file not found"));
}

#[test]
fn full_length_iteration_flag_is_accepted() {
    // The full preset points at tracks/default.json, absent in an empty
    // directory, so the run stops at validation rather than at parsing.
    let tmp = tempfile::tempdir().unwrap();
    let out = deskrace(tmp.path(), &["train-teacher", "--config", "full", "--iterations", "600"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("track file not found"), "{err}");
}

#[test]
fn unknown_randomization_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = deskrace(tmp.path(), &["distill", "--config", cfg.to_str().unwrap(), "--rand", "without:blur"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn workflow_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = tiny_config(dir);
    let cfg = cfg.to_str().unwrap();
    let out = dir.join("out");

    ok(&deskrace(dir, &["--sequential", "train-teacher", "--config", cfg]));
    let teacher = out.join("teacher");
    for i in 1..=3 {
        assert!(teacher.join(format!("iteration_{i:04}.rdnn")).exists());
    }
    assert!(teacher.join("training_log.csv").exists());
    let m = manifest(&teacher);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["seeds"]["teacher"], json!(1));
    assert_eq!(m["parallel"], json!(false));

    ok(&deskrace(dir, &["collect", "--config", cfg]));
    assert!(out.join("observations/observations.robs").exists());
    assert!(out.join("observations/manifest.json").exists());

    ok(&deskrace(dir, &["distill", "--config", cfg, "--teacher", "3", "--rand", "without:hsv", "--name", "s"]));
    let student = out.join("students/s/student.rdnn");
    assert!(student.exists());
    assert!(out.join("students/s/manifest.json").exists());

    ok(&deskrace(dir, &["eval", "--config", cfg, "--model", student.to_str().unwrap(), "--trials", "50", "--domain", "test"]));
    let report: Value = serde_json::from_slice(&fs::read(out.join("eval/student/report_test.json")).unwrap()).unwrap();
    assert_eq!(report["trials"], json!(50));
    assert_eq!(report["records"].as_array().unwrap().len(), 50);

    ok(&deskrace(dir, &["ablate", "--config", cfg]));
    let csv = fs::read_to_string(out.join("ablation/ablation.csv")).unwrap();
    // Two checkpoints x (teacher + baseline + AllRand + six leave-one-out) x two domains.
    assert_eq!(csv.lines().count(), 1 + 2 * 9 * 2);
    assert!(out.join("ablation/manifest.json").exists());

    ok(&deskrace(dir, &["render-preview", "--config", cfg]));
    let preview = out.join("preview");
    for name in ["train", "test", "gaussian", "reflection", "hsv", "salt_pepper", "cutout_noise", "cutout_obs"] {
        let png = fs::read(preview.join(format!("{name}.png"))).unwrap();
        assert_eq!(&png[1..4], b"PNG");
    }
    assert_eq!(manifest(&preview)["outputs"].as_array().unwrap().len(), 8);

    ok(&deskrace(dir, &["report", "--config", cfg]));
    let summary = fs::read_to_string(out.join("report/summary.txt")).unwrap();
    assert!(summary.contains("student"));
    assert!(out.join("report/manifest.json").exists());
}

#[test]
fn manifests_pin_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = tiny_config(dir);
    ok(&deskrace(dir, &["render-preview", "--config", cfg.to_str().unwrap()]));
    let m = manifest(&dir.join("out/preview"));
    // The embedded config, saved back to disk, reproduces the same hash.
    fs::write(dir.join("again.json"), serde_json::to_vec(&m["config"]).unwrap()).unwrap();
    ok(&deskrace(dir, &["render-preview", "--config", "again.json"]));
    let again = manifest(&dir.join("out/preview"));
    assert_eq!(again["config_hash"], m["config_hash"]);
    let a = fs::read(dir.join("out/preview/gaussian.png")).unwrap();
    ok(&deskrace(dir, &["render-preview", "--config", "again.json"]));
    assert_eq!(fs::read(dir.join("out/preview/gaussian.png")).unwrap(), a);
}
