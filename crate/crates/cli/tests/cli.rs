use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "cohort": { "synth": { "n_patients": 800 } },
  "variants": ["lc_only", "raw_anchors"],
  "eval": { "bootstrap_replicates": 30, "hazard_bootstrap": 3 },
  "seed": 5
}"#;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_concept-risk"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn run_twice_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), CONFIG).unwrap();
    for out in ["a", "b"] {
        let o = cli(dir.path(), &["--config", "cfg.json", "--out", out, "run"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(dir.path().join("a/report.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/report.json")).unwrap();
    assert_eq!(a, b);
    let manifest = read_json(&dir.path().join("a/manifest.json"));
    assert_eq!(manifest["stage"], "run");
    assert_eq!(manifest["seed"], 5);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), CONFIG).unwrap();
    let o = cli(dir.path(), &["--config", "cfg.json", "--seed", "9", "--out", "s", "synth"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = read_json(&dir.path().join("s/manifest.json"));
    assert_eq!(manifest["seed"], 9);
    assert!(dir.path().join("s/cohort/cohort.csv").is_file());
    assert!(!dir.path().join("s/report.json").exists());
}

#[test]
fn errors_exit_nonzero_with_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{ "cohort": { "csv": { "path": "nope.csv" } }, "anchors": [ { "concept": "x", "anchors": ["x_code"] } ] }"#,
    )
    .unwrap();
    let o = cli(dir.path(), &["--config", "bad.json", "--out", "o", "run"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stage `synth`"), "{err}");
    assert!(!dir.path().join("o").exists());

    let o = cli(dir.path(), &["--config", "missing.json", "run"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));
}
