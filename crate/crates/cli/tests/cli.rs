use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BENCHMARK: &str = r#"
[system]
L = "sigma_minus"
eta = "ground"

[field]
kind = "single_photon"
pulse = { family = "decaying_exponential", gamma = 1.0 }

[run]
dt = 0.001
t_end = 10.0
outputs = 1000
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photon-filter"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn column(csv_text: &str, name: &str) -> Vec<f64> {
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

#[test]
fn master_benchmark_peak() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", BENCHMARK);
    let out = dir.path().join("out");
    let o = bin(&["master", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("master.csv")).unwrap();
    let n = column(&text, "mu_11_n_re");
    let peak = n.iter().cloned().fold(f64::MIN, f64::max);
    assert!((peak - 4.0 * (-2.0f64).exp()).abs() < 1e-4, "peak {peak}");
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    for key in ["version", "seed", "dt", "config_hash", "wall_time_s"] {
        assert!(meta.get(key).is_some(), "metadata lacks {key}");
    }
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn filter_replay_and_rerun_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = BENCHMARK.replace("t_end = 10.0\noutputs = 1000", "t_end = 2.0\nseed = 11");
    let cfg = write_config(dir.path(), "run.toml", &text);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(bin(&["filter", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(bin(&["filter", "--config", &cfg, "--out", b.to_str().unwrap()]).status.success());
    let record = a.join("record.csv");
    let o = bin(&[
        "filter",
        "--config",
        &cfg,
        "--out",
        c.to_str().unwrap(),
        "--replay",
        record.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "filter.csv"), read(&b, "filter.csv"));
    assert_eq!(read(&a, "record.csv"), read(&b, "record.csv"));
    assert_eq!(read(&a, "filter.csv"), read(&c, "filter.csv"));

    let d = dir.path().join("d");
    assert!(bin(&["filter", "--config", &cfg, "--out", d.to_str().unwrap(), "--seed", "12"])
        .status
        .success());
    assert_ne!(read(&a, "record.csv"), read(&d, "record.csv"));
}

#[test]
fn invalid_config_exits_2_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let text = BENCHMARK.replace("L = ", "S = [[[2.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]\nL = ");
    let cfg = write_config(dir.path(), "bad.toml", &text);
    let o = bin(&["master", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "validation");
    assert!(err["issues"].as_array().unwrap().iter().any(|i| i["path"] == "[system].S"));

    let cfg = write_config(dir.path(), "syntax.toml", "[system\n");
    let o = bin(&["master", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "parse");
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
[system]
L = [[[0.0, 0.0], [0.0, 0.0]], [[60.0, 0.0], [0.0, 0.0]]]
eta = "excited"

[run]
dt = 0.1
t_end = 20.0
formulation = "extended"
"#;
    let cfg = write_config(dir.path(), "stiff.toml", text);
    let o = bin(&["filter", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "numerical");
}

#[test]
fn validate_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
[system]
L = "sigma_minus"
H = "sigma_x"
eta = "excited"

[run]
dt = 0.002
t_end = 1.0
outputs = 20
trajectories = 100
"#;
    let cfg = write_config(dir.path(), "v.toml", text);
    let o = bin(&[
        "validate",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
        "--threads",
        "1",
    ]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("PASS") && stdout.contains("checks, 0 failed"), "{stdout}");
    assert!(dir.path().join("validation.json").exists());
}

#[test]
fn ensemble_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = BENCHMARK.replace("t_end = 10.0\noutputs = 1000", "t_end = 1.0\noutputs = 10\ntrajectories = 20");
    let cfg = write_config(dir.path(), "e.toml", &text);
    let run = |threads: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = bin(&["ensemble", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("ensemble.csv")).unwrap()
    };
    let one = run("1", "one");
    assert_eq!(one, run("4", "four"));
    let text = String::from_utf8(one).unwrap();
    assert_eq!(text.lines().count(), 12);
    assert!(text.lines().next().unwrap().contains("pi_11_n_z_re"));
}

#[test]
fn export_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("s.csv");
    fs::write(&series, "time,x_re,x_im\n0,1,0\n0.5,0.5,0.25\n1,0.25,0\n").unwrap();
    let out = dir.path().join("long.csv");
    let o = bin(&["export", series.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 6);
    assert!(text.contains("x_im"));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "time,x_re,x_im\n").unwrap();
    let target = dir.path().join("none.csv");
    let o = bin(&["export", empty.to_str().unwrap(), "--out", target.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!target.exists());
}
