use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "latent_count = 4\nlatent_dim = 8\nbyte_dim = 8\nheads = 2\ntower_layers = 1\n\
depth_repeats = 1\nnum_bands = 2\nsynth_resolution = 8\nsynth_train = 40\nsynth_test = 20\n\
steps = 12\nlr = 1e-3\nmembers = 2\n";

fn uqp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqp")).args(args).output().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, format!("{TINY}{extra}")).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_evaluate_sweep_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "strategy = deep\n");
    let run = tmp.path().join("run");
    let run_s = run.to_str().unwrap();

    let out = uqp(&["train", "--config", &cfg, "--out-dir", run_s, "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "config.txt",
        "member_0.uapc",
        "member_1.uapc",
        "predictor.json",
        "train_log.json",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }

    let out = uqp(&["evaluate", "--config", &cfg, "--out-dir", run_s, "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(run.join("report.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(parsed[0]["variant"], "deep");
    assert_eq!(parsed[0]["ensemble_size"], 2);

    let out = uqp(&[
        "sweep-ensemble",
        "--config",
        &cfg,
        "--out-dir",
        run_s,
        "--seed",
        "3",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let sweep = std::fs::read_to_string(run.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
    assert!(sweep.starts_with("variant,ensemble_size,seed,accuracy,nll_nats,ece,brier"));

    let merged = tmp.path().join("all.csv");
    let out = uqp(&[
        "report",
        run.join("report.json").to_str().unwrap(),
        "--output",
        merged.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(merged).unwrap().lines().count(), 2);
}

#[test]
fn flags_override_config_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let run = tmp.path().join("mc");
    let out = uqp(&[
        "train",
        "--config",
        &cfg,
        "--out-dir",
        run.to_str().unwrap(),
        "--strategy",
        "mc",
        "--mc-samples=3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo = std::fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(echo.contains("strategy = mc"), "{echo}");
    assert!(echo.contains("mc_samples = 3"), "{echo}");
}

#[test]
fn errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let run = tmp.path().join("r");
    let run_s = run.to_str().unwrap();

    let out = uqp(&["train", "--config", &cfg, "--no-such-key", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]"));

    let out = uqp(&[
        "evaluate",
        "--config",
        &cfg,
        "--run-dir",
        tmp.path().join("missing").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));

    assert!(uqp(&["train", "--config", &cfg, "--out-dir", run_s]).status.success());
    let out = uqp(&["evaluate", "--config", &cfg, "--out-dir", run_s, "--latent-dim", "16"]);
    assert_eq!(out.status.code(), Some(6));

    std::fs::write(run.join("member_0.uapc"), b"garbage").unwrap();
    let out = uqp(&["evaluate", "--config", &cfg, "--out-dir", run_s]);
    assert_eq!(out.status.code(), Some(5));

    let out = uqp(&["evaluate", "--config", &cfg, "--out-dir", run_s, "--format", "xml"]);
    assert_eq!(out.status.code(), Some(2));
}
