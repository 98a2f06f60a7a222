use std::path::Path;
use std::process::{Command, Output};

fn iqdeg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iqdeg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(
        o.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn small_pipeline(dir: &Path) {
    ok(iqdeg(&["synth", "--out", "corpus", "--per-class", "12", "--seed", "3", "--height", "48", "--width", "64"], dir));
    ok(iqdeg(&["extract", "--manifest", "corpus/manifest.csv", "--out", "cache.csv"], dir));
    ok(iqdeg(
        &["train", "--cache", "cache.csv", "--model", "m.txt", "--report", "train.json", "--c", "1,10", "--gamma", "0.1", "--folds", "3"],
        dir,
    ));
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_pipeline(d);
    let train: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("train.json")).unwrap()).unwrap();
    assert_eq!(train["train_size"], 54);
    assert_eq!(train["test_size"], 18);
    assert_eq!(train["grid"]["table"].as_array().unwrap().len(), 2);

    let out = ok(iqdeg(&["eval", "--cache", "cache.csv", "--model", "m.txt", "--json", "r.json", "--out", "r.txt"], d));
    assert!(stdout(&out).starts_with("accuracy: "));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["total"], 18);
    assert_eq!(report["seed"], 42);
    assert_eq!(std::fs::read_to_string(d.join("r.txt")).unwrap(), stdout(&out));

    let out = ok(iqdeg(
        &["predict", "--model", "m.txt", "--features", "--dump-fields", "fields", "corpus/noise/noise_00048.png"],
        d,
    ));
    let text = stdout(&out);
    assert!(text.contains("votes: clean="));
    assert_eq!(text.lines().count(), 21);
    for name in ["intensity", "mean_sub", "contrast", "laplacian", "mscn", "mscn_prod"] {
        assert!(d.join("fields/noise_00048").join(format!("{name}.png")).is_file(), "{name}");
    }
}

#[test]
fn eval_on_training_split_warns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_pipeline(d);
    let out = ok(iqdeg(&["eval", "--cache", "cache.csv", "--model", "m.txt", "--on-train", "--json", "r.json"], d));
    assert!(stdout(&out).contains("warning: evaluating on the training split"));

    ok(iqdeg(&["extract", "--manifest", "corpus/manifest.csv", "--out", "other.csv", "--radius-rows", "2"], d));
    let out = ok(iqdeg(&["eval", "--cache", "other.csv", "--model", "m.txt"], d));
    assert!(stdout(&out).contains("cache differs"));
}

#[test]
fn camera_filters_and_label_subsets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_pipeline(d);
    ok(iqdeg(
        &["train", "--cache", "cache.csv", "--model", "b.txt", "--labels", "clean,soiled", "--train-cameras", "FV,RV", "--c", "1", "--gamma", "0.1", "--folds", "2", "--report", "b.json"],
        d,
    ));
    let model = std::fs::read_to_string(d.join("b.txt")).unwrap();
    assert!(model.contains("labels clean,soiled"));
    assert!(model.contains("meta train_cameras FV,RV"));
    let out = ok(iqdeg(&["eval", "--cache", "cache.csv", "--model", "b.txt", "--test-cameras", "MVL,MVR", "--json", "r.json"], d));
    assert!(stdout(&out).contains("accuracy"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert!(report["total"].as_u64().unwrap() > 0);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_pipeline(d);
    std::fs::write(d.join("run.toml"), "[split]\nseed = 5\ntrain_fraction = 0.5\n[grid]\nc = [1.0]\ngamma = [0.1]\nfolds = 2\n").unwrap();
    ok(iqdeg(&["train", "--cache", "cache.csv", "--model", "a.txt", "--config", "run.toml", "--report", "a.json"], d));
    let a: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("a.json")).unwrap()).unwrap();
    assert_eq!(a["train_size"], 36);
    ok(iqdeg(
        &["train", "--cache", "cache.csv", "--model", "b.txt", "--config", "run.toml", "--train-fraction", "0.75", "--report", "b.json"],
        d,
    ));
    let b: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("b.json")).unwrap()).unwrap();
    assert_eq!(b["train_size"], 54);
    assert_ne!(a["config_digest"], b["config_digest"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(iqdeg(&["frobnicate"], d).status.code(), Some(1));
    assert_eq!(iqdeg(&["extract", "--manifest", "missing.csv"], d).status.code(), Some(1));
    assert_eq!(iqdeg(&["--help"], d).status.code(), Some(0));
    let out = iqdeg(&["extract", "--manifest", "missing.csv", "--out", "c.csv"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));

    std::fs::write(d.join("bad.toml"), "[split]\nsed = 1\n").unwrap();
    std::fs::write(d.join("m.csv"), "path,label\n").unwrap();
    let out = iqdeg(&["extract", "--manifest", "m.csv", "--out", "c.csv", "--config", "bad.toml"], d);
    assert_eq!(out.status.code(), Some(1));

    small_pipeline(d);
    std::fs::write(d.join("cap.toml"), "[solver]\nmax_iter = 1\n[grid]\nc = [100.0]\ngamma = [1.0]\nfolds = 2\n").unwrap();
    let out = iqdeg(&["train", "--cache", "cache.csv", "--model", "x.txt", "--config", "cap.toml", "--strict"], d);
    assert_eq!(out.status.code(), Some(3));
    let out = iqdeg(&["train", "--cache", "cache.csv", "--model", "x.txt", "--config", "cap.toml"], d);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn extract_fails_when_too_many_images_are_broken() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(iqdeg(&["synth", "--out", "corpus", "--per-class", "2", "--height", "32", "--width", "32"], d));
    for name in ["clean/clean_00000.png", "soiled/soiled_00002.png"] {
        std::fs::write(d.join("corpus").join(name), b"broken").unwrap();
    }
    let out = iqdeg(&["extract", "--manifest", "corpus/manifest.csv", "--out", "c.csv"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(d.join("c.csv.failures.csv").is_file());
    ok(iqdeg(&["extract", "--manifest", "corpus/manifest.csv", "--out", "c.csv", "--max-failure-rate", "0.2"], d));
}
