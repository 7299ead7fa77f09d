use std::path::Path;
use std::process::{Command, Output};

use kramers_cli::config::RunConfig;

fn kramers(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kramers")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let out = kramers(&["default-config"]);
    assert!(out.status.success());
    let mut v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    v["grid"]["y_points"] = 16.into();
    v["grid"]["x_points"] = 256.into();
    v["mc"]["jump_samples"] = 500.into();
    v["output_dir"] = dir.join("out").to_string_lossy().into_owned().into();
    edit(&mut v);
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn default_config_round_trips() {
    let out = kramers(&["default-config"]);
    let cfg: RunConfig = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = small_config(dir.path(), |v| v["sigma"] = (-0.1).into());
    assert_eq!(kramers(&["--config", &bad, "spectral"]).status.code(), Some(2));
    let unknown = small_config(dir.path(), |v| v["sigmaa"] = 0.3.into());
    assert_eq!(kramers(&["--config", &unknown, "spectral"]).status.code(), Some(2));
    assert_eq!(kramers(&["--config", "/nonexistent/config.json", "spectral"]).status.code(), Some(2));
}

#[test]
fn monostable_potential_fails_verify_early() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |v| v["potential"]["tilt"] = 0.6.into());
    let out = kramers(&["--config", &cfg, "verify"]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("FAIL potential.assumptions"), "{stdout}");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/verify.json")).unwrap()).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 1);
    assert!(!dir.path().join("out/spectral.csv").exists());
}

#[test]
fn plots_are_reproducible_and_need_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |_| ());
    assert!(kramers(&["--config", &cfg, "plot"]).status.code() == Some(3));
    for stage in ["spectral", "jump"] {
        assert!(kramers(&["--config", &cfg, stage]).status.success());
    }
    assert!(kramers(&["--config", &cfg, "plot"]).status.success());
    let svgs = ["lambda1.svg", "rates.svg", "delta.svg"];
    let first: Vec<Vec<u8>> = svgs.iter().map(|f| std::fs::read(dir.path().join("out").join(f)).unwrap()).collect();
    assert!(kramers(&["--config", &cfg, "plot"]).status.success());
    for (f, bytes) in svgs.iter().zip(&first) {
        assert_eq!(&std::fs::read(dir.path().join("out").join(f)).unwrap(), bytes, "{f}");
    }
}

#[test]
fn seed_flag_changes_only_sampled_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |_| ());
    let read = |name: &str| std::fs::read(dir.path().join("out").join(name)).unwrap();
    assert!(kramers(&["--config", &cfg, "--seed", "5", "jump"]).status.success());
    let (csv5, json5) = (read("jump.csv"), read("jump.json"));
    assert!(kramers(&["--config", &cfg, "--seed", "6", "jump"]).status.success());
    assert_eq!(read("jump.csv"), csv5);
    assert_ne!(read("jump.json"), json5);
}
