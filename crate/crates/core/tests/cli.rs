use std::path::Path;
use std::process::{Command, Output};

fn beamscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamscope"))
        .args(args)
        .env_remove("BEAMSCOPE_SEED")
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn write_config(dir: &Path) -> String {
    let cfg = format!(
        r#"schema_version = 1
seed = 5
snr_grid_db = [0.0, 10.0]

[system]
geometry = {{ kind = "ula", n = 16 }}
m = 8
num_paths = 2

[[estimators]]
kind = "amp"
iterations = 4

[[estimators]]
kind = "lamp"
layers = 2

[data]
train = 64
val = 16
test = 8

[training]
strategy = "dual"

[training.optimizer]
batch_size = 16
max_steps = 4
eval_every = 2

[output]
dir = "{}"
"#,
        dir.join("out").display()
    );
    let path = dir.join("exp.toml");
    std::fs::write(&path, cfg).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn count_prints_reference_table() {
    let out = beamscope(&["count"]);
    assert!(out.status.success());
    let s = text(&out.stdout);
    assert!(s.contains("2955664"), "{s}");
    assert!(s.contains("674560"));
    assert!(s.contains("617472"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(beamscope(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(beamscope(&["count", "--bogus"]).status.code(), Some(2));
    assert_eq!(beamscope(&[]).status.code(), Some(2));
}

#[test]
fn missing_config_is_reported() {
    let out = beamscope(&["evaluate", "--config", "missing.toml"]);
    assert!(!out.status.success());
    assert_ne!(out.status.code(), Some(0));
    assert!(text(&out.stderr).contains("missing.toml"));
    let out = beamscope(&["generate"]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("--config"));
}

#[test]
fn bad_seed_env_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_beamscope"))
        .args(["generate", "--config", &cfg])
        .env("BEAMSCOPE_SEED", "twelve")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("BEAMSCOPE_SEED"));
}

#[test]
fn quick_oracle_passes() {
    let out = beamscope(&["oracle", "--quick", "--seed", "3"]);
    let s = text(&out.stdout);
    assert!(out.status.success(), "{s}");
    assert!(s.lines().all(|l| l.starts_with("PASS")), "{s}");
}

#[test]
fn pipeline_without_training_fails_then_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    assert!(beamscope(&["generate", "--config", &cfg]).status.success());
    let out = beamscope(&["evaluate", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("lamp"), "{}", text(&out.stderr));
    let out = beamscope(&["train", "--config", &cfg, "--threads", "1"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(dir.path().join("out/lamp_low.ckpt").exists());
    assert!(dir.path().join("out/lamp_high_train.csv").exists());
    let out = beamscope(&["evaluate", "--config", &cfg, "--threads", "1"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("estimator,snr_db,nmse_db,n_test,multiplies,wall_ms\n"));
}
