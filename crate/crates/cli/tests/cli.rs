use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn magnon() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_magnon"));
    cmd.env_remove("MAGNON_OUTPUT_ROOT");
    cmd
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn small_clean() -> Value {
    serde_json::json!({
        "schema_version": 1,
        "name": "small",
        "experiment": "clean-optimize",
        "chain": {"n_sites": 31, "trap_frequency": 3.0},
        "task": {"distance": 2, "duration": 2},
        "ansatz": {"kind": "fourier", "cutoff": 4},
        "optimizer": {"scheme": "adam", "learning_rate": 0.05, "max_steps": 30, "stop_infidelity": 1e-12}
    })
}

fn small_evaluate() -> Value {
    serde_json::json!({
        "schema_version": 1,
        "name": "small-eval",
        "experiment": "evaluate",
        "chain": {"n_sites": 41, "trap_frequency": 1.0},
        "task": {"distance": 6, "duration": 8},
        "protocol": {"kind": "sta-reference"},
        "disorder": {"magnitudes": [0.05, 0.1], "n_patterns": 12, "base_seed": 3}
    })
}

fn record(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("record.json")).unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().expect("stderr line")).expect("JSON error record")
}

#[test]
fn shipped_configs_validate() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let out = magnon().arg("validate-config").arg(&path).output().unwrap();
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        let resolved: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(resolved["schema_version"], 1);
        n += 1;
    }
    assert!(n >= 6);
}

#[test]
fn negative_duration_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_clean());
    let out_dir = tmp.path().join("run");
    let out = magnon()
        .args(["run"])
        .arg(&cfg)
        .args(["--set", "task.duration=-5", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
    assert!(!out_dir.exists());
}

#[test]
fn unknown_key_and_bad_override_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = small_clean();
    v["optimiser"] = serde_json::json!({});
    let cfg = write_config(tmp.path(), &v);
    let out = magnon().arg("validate-config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(tmp.path(), &small_clean());
    let out = magnon().arg("validate-config").arg(&cfg).args(["--set", "noequals"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_exits_4() {
    let out = magnon().args(["validate-config", "/nonexistent/magnon.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"], "io");
}

#[test]
fn unwritable_output_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_clean());
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = magnon()
        .arg("run")
        .arg(&cfg)
        .args(["--no-plots", "--out"])
        .arg(blocker.join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn repeated_runs_have_identical_metrics_and_replay_from_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_clean());
    let mut records = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let out = magnon().arg("run").arg(&cfg).arg("--out").arg(&dir).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        records.push(record(&dir));
    }
    let (a, b) = (&records[0], &records[1]);
    for key in ["metrics", "reports", "seeds", "config"] {
        assert_eq!(serde_json::to_string(&a[key]).unwrap(), serde_json::to_string(&b[key]).unwrap(), "{key}");
    }
    assert!(a["metrics"]["final_infidelity"].as_f64().unwrap() < a["metrics"]["linear_infidelity"].as_f64().unwrap());

    // The embedded config alone reproduces the run.
    let replay = tmp.path().join("replay.json");
    std::fs::write(&replay, serde_json::to_string(&a["config"]).unwrap()).unwrap();
    let dir = tmp.path().join("c");
    let out = magnon().arg("run").arg(&replay).arg("--out").arg(&dir).output().unwrap();
    assert!(out.status.success());
    assert_eq!(record(&dir)["metrics"], a["metrics"]);
}

#[test]
fn run_writes_headed_csv_and_svg_from_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_clean());
    let dir = tmp.path().join("run");
    assert!(magnon().arg("run").arg(&cfg).arg("--out").arg(&dir).output().unwrap().status.success());
    let protocol = std::fs::read_to_string(dir.join("protocol.csv")).unwrap();
    assert_eq!(protocol.lines().next(), Some("t,x0,velocity"));
    assert_eq!(protocol.lines().count(), 22);
    assert_eq!(std::fs::read_to_string(dir.join("history.csv")).unwrap().lines().next(), Some("step,infidelity"));
    for svg in ["history.svg", "protocol.svg", "velocity.svg", "spectrum.svg"] {
        assert!(std::fs::read_to_string(dir.join(svg)).unwrap().starts_with("<svg"), "{svg}");
    }
    let rec = record(&dir);
    assert!(rec["artifacts"].as_array().unwrap().iter().any(|a| a == "protocol.csv"));
    assert_eq!(rec["command"], "run");

    let bare = tmp.path().join("bare");
    assert!(magnon().arg("run").arg(&cfg).arg("--no-plots").arg("--out").arg(&bare).output().unwrap().status.success());
    assert!(!bare.join("history.svg").exists());
    assert_eq!(record(&bare)["metrics"], rec["metrics"], "plots never affect metrics");
}

#[test]
fn output_root_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_clean());
    let root = tmp.path().join("root");
    let out = magnon()
        .env("MAGNON_OUTPUT_ROOT", &root)
        .arg("run")
        .arg(&cfg)
        .args(["--no-plots", "--set", "name=from-env"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("from-env").join("record.json").exists());
}

#[test]
fn jobs_flag_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_evaluate());
    let mut metrics = Vec::new();
    for jobs in ["1", "3"] {
        let dir = tmp.path().join(jobs);
        let out = magnon()
            .args(["--jobs", jobs, "run"])
            .arg(&cfg)
            .args(["--no-plots", "--out"])
            .arg(&dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        metrics.push(serde_json::to_string(&record(&dir)["metrics"]).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);
    let csv = std::fs::read_to_string(tmp.path().join("1").join("ensemble.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("magnitude,mean_infidelity,standard_error"));
}

#[test]
fn gradient_check_passes_on_default_instance() {
    let out = magnon().arg("gradient-check").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["cases"].as_array().unwrap().len(), 16);
}

#[test]
fn gradient_check_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_clean());
    let out = magnon()
        .args(["gradient-check", "--tolerance", "1e-16", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "numerical");
}

#[test]
fn other_experiment_kinds_run_on_small_chains() {
    let tmp = tempfile::tempdir().unwrap();
    let base = small_clean();
    let cases = [
        ("disorder-single", serde_json::json!({"magnitudes": [0.1], "seeds": [1, 2]}), "per_pattern.csv"),
        ("disorder-batch", serde_json::json!({"magnitudes": [0.1], "base_seed": 5}), "holdout.csv"),
        ("localization", Value::Null, "xi.csv"),
        ("speed-limit", Value::Null, "fidelity.csv"),
    ];
    for (kind, disorder, table) in cases {
        let mut v = base.clone();
        v["experiment"] = kind.into();
        if !disorder.is_null() {
            v["disorder"] = disorder;
        }
        v["schedule"] = serde_json::json!({"n_train_patterns": 4, "batch_size": 2, "episodes": 2, "refresh_after_episodes": 1});
        v["holdout"] = serde_json::json!({"n_patterns": 4});
        v["analysis"] = serde_json::json!({
            "localization": {"magnitudes": [0.5, 1.0], "n_realizations": 5},
            "speed_limit": {"distances": [2, 4], "durations": [1, 2, 4]}
        });
        let cfg = write_config(tmp.path(), &v);
        let dir = tmp.path().join(kind);
        let out = magnon().arg("run").arg(&cfg).arg("--out").arg(&dir).output().unwrap();
        assert!(out.status.success(), "{kind}: {}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(dir.join(table)).unwrap();
        assert!(text.lines().count() > 1, "{kind}");
    }
}

#[test]
fn reproduce_rejects_unknown_target() {
    let out = magnon().args(["reproduce", "fig9"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn fourier_at_tau_60_reaches_one_percent() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = magnon()
        .arg("run")
        .arg(configs_dir().join("clean-fourier-tau60.json"))
        .args(["--no-plots", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = &record(&dir)["metrics"];
    assert!(m["final_infidelity"].as_f64().unwrap() <= 1e-2, "{m}");
}
