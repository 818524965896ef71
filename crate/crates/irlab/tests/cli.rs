//! Command-line contract tests: exit codes, config precedence, and format
//! errors surfacing with line numbers.

use std::process::Command;

fn irlab() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_irlab"));
    cmd.env_remove("IRLAB_SEED");
    cmd
}

#[test]
fn config_errors_exit_one() {
    // Unknown scorer name.
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.tsv"), "d1\thello world\n").unwrap();
    let out = irlab()
        .args([
            "axioms",
            "--scorer",
            "bm99",
            "--corpus",
            dir.path().join("c.tsv").to_str().unwrap(),
            "--seed",
            "1",
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));

    // Unknown flag is a configuration error too.
    let out = irlab().args(["eval", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Missing seed everywhere.
    let out = irlab()
        .args([
            "gen-synthetic",
            "--preset",
            "desk-density",
            "--out",
            dir.path().join("g").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("IRLAB_SEED"));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = irlab()
        .args([
            "eval",
            "--run",
            dir.path().join("missing.txt").to_str().unwrap(),
            "--qrels",
            dir.path().join("missing.txt").to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_lines_name_their_line_number() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("q.txt"), "q1 0 d1 1\nq1 d2\n").unwrap();
    std::fs::write(dir.path().join("r.txt"), "q1 Q0 d1 1 0.5 tag\n").unwrap();
    let out = irlab()
        .args([
            "eval",
            "--run",
            dir.path().join("r.txt").to_str().unwrap(),
            "--qrels",
            dir.path().join("q.txt").to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}

#[test]
fn seed_env_var_is_the_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("g");
    let mut cmd = irlab();
    cmd.env("IRLAB_SEED", "123");
    let out = cmd
        .args([
            "gen-synthetic",
            "--preset",
            "desk-density",
            "--queries",
            "5",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 123"));
}

#[test]
fn help_and_version_exit_zero() {
    let out = irlab().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = irlab().arg("--version").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn train_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    // Tiny dataset via the generator.
    let data = dir.path().join("data");
    let out = irlab()
        .args([
            "gen-synthetic",
            "--preset",
            "desk-density",
            "--seed",
            "3",
            "--queries",
            "6",
            "--doc-len",
            "40,60",
            "--out",
            data.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let config = serde_json::json!({
        "seed": 9,
        "model": "int",
        "corpus": data.join("corpus.tsv"),
        "topics": data.join("topics.tsv"),
        "triples": data.join("triples.tsv"),
        "epochs": 1,
        "rate": 0.01,
    });
    let config_path = dir.path().join("train.json");
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();

    let model_dir = dir.path().join("model");
    let out = irlab()
        .args([
            "train",
            "--config",
            config_path.to_str().unwrap(),
            "--epochs",
            "2",
            "--out",
            model_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // Flag epochs=2 beat the config's 1: the loss trace has two rows.
    let loss = std::fs::read_to_string(model_dir.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3, "{loss}");
    let manifest = std::fs::read_to_string(model_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"epochs\": 2"));
    assert!(manifest.contains("\"seed\": 9"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("train.json");
    std::fs::write(&config_path, r#"{"seed": 1, "unknown_key": true}"#).unwrap();
    let out = irlab()
        .args(["train", "--config", config_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_key"));
}
