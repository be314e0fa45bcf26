use std::path::Path;
use std::process::{Command, Output};

fn ucdmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ucdmt")).args(args).env_remove("UCDMT_SEED").output().expect("spawn ucdmt")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn phantom(dir: &Path) -> String {
    let data = dir.join("data");
    let out = ucdmt(&["phantom", "--subjects", "4", "--size", "16", "--slices", "5", "--out", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    data.to_string_lossy().into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn unknown_flag_exits_1_and_names_it() {
    let out = ucdmt(&["train", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--bogus-flag"), "{}", stderr(&out));
}

#[test]
fn help_exits_0() {
    let out = ucdmt(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("evaluate"));
}

#[test]
fn missing_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = phantom(dir.path());
    let missing = dir.path().join("nope.ckpt");
    let out = ucdmt(&[
        "evaluate",
        "--checkpoint",
        missing.to_str().unwrap(),
        "--data",
        &data,
        "--report",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.ckpt"), "{}", stderr(&out));
}

#[test]
fn invalid_config_exits_1_with_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let data = phantom(dir.path());
    let run = dir.path().join("run");
    for (body, key) in [
        (r#"{"batch_size": 6}"#, "batch_size"),
        (r#"{"weights": {"alpha": "high"}}"#, "weights.alpha"),
        (r#"{"weights": {"gamma": 1.0}}"#, "weights"),
        (r#"{"lr_gen": -1}"#, "lr_gen"),
    ] {
        let config = write_config(dir.path(), body);
        let out = ucdmt(&["train", "--config", &config, "--data", &data, "--out", run.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1), "{body}: {}", stderr(&out));
        assert!(stderr(&out).contains(key), "{body}: {}", stderr(&out));
    }
}

#[test]
fn unknown_modality_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let data = phantom(dir.path());
    let out = ucdmt(&[
        "translate",
        "--checkpoint",
        "x.ckpt",
        "--input",
        &data,
        "--subject",
        "phantom_003",
        "--from",
        "pd",
        "--to",
        "t2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("pd"));
}

#[test]
fn train_translate_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = phantom(dir.path());
    let run = dir.path().join("run");
    let config = write_config(dir.path(), r#"{"epochs": 1, "batch_size": 8}"#);
    let out = ucdmt(&["train", "--config", &config, "--data", &data, "--out", run.to_str().unwrap(), "--quiet"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let echoed = text.lines().find_map(|l| l.strip_prefix("config: ")).expect("effective config echoed");
    let echoed: serde_json::Value = serde_json::from_str(echoed).unwrap();
    assert_eq!(echoed["epochs"], 1);
    assert_eq!(echoed["lr_gen"], 1e-3);
    assert_eq!(echoed["weights"]["beta"], 0.5);
    let ckpt = run.join("final.ckpt");
    assert!(ckpt.exists() && run.join("metrics.jsonl").exists());

    let translated = dir.path().join("translated");
    let grid = dir.path().join("grid.png");
    let out = ucdmt(&[
        "translate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        &data,
        "--subject",
        "phantom_003",
        "--from",
        "t1",
        "--to",
        "all",
        "--out",
        translated.to_str().unwrap(),
        "--grid",
        grid.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for m in ["t1ce", "t2", "flair"] {
        assert!(translated.join(format!("phantom_003/{m}.raw")).exists());
        assert!(translated.join(format!("phantom_003/{m}.json")).exists());
    }
    assert!(!translated.join("phantom_003/t1.raw").exists());
    assert_eq!(&std::fs::read(&grid).unwrap()[1..4], b"PNG");

    let report = dir.path().join("report.json");
    let out = ucdmt(&[
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        &data,
        "--report",
        report.to_str().unwrap(),
        "--include-self",
        "--classifier-steps",
        "5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["directions"].as_object().unwrap().len(), 16);
    assert_eq!(report["config"]["split"], "test");
    assert!(report["checkpoint_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn seed_environment_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = phantom(dir.path());
    let config = write_config(dir.path(), r#"{"epochs": 0, "batch_size": 8}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_ucdmt"))
        .args(["train", "--config", &config, "--data", &data, "--out", dir.path().join("run").to_str().unwrap()])
        .env("UCDMT_SEED", "123")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("\"seed\":123"), "{}", stdout(&out));
}
