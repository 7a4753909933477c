use std::fs;
use std::process::Command;

fn edsl() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_edsl"));
    c.env("RUST_LOG", "error");
    c
}

const SMALL: &str = r#"
trials = 2
rounds = 3
[data]
kind = "synthetic"
n_per_machine = 40
p = 20
m = 3
s = 3
"#;

#[test]
fn missing_config_is_a_config_error() {
    let out = edsl().args(["run", "--config", "/nonexistent/edsl.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "trials = 0\n[data]\nkind = \"synthetic\"\nn_per_machine = 10\np = 5\nm = 2\ns = 1\n").unwrap();
    let out = edsl().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let csv = dir.path().join("res.csv");
    let out = edsl().arg("run").arg("--config").arg(&cfg).arg("--out").arg(&csv).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("method,trial,round,l1_error,l2_error,objective,metric,payload_bytes,cumulative_bytes,solver_iterations,wall_ms\n"));
    assert!(dir.path().join("res_summary.csv").exists());

    let out = edsl().arg("plot").arg(&csv).arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    let svg = fs::read_to_string(dir.path().join("res_l2_error.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.contains("<polyline"));
}

#[test]
fn plot_of_empty_csv_fails() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    fs::write(&csv, "method,trial,round,l1_error,l2_error,objective,metric,payload_bytes,cumulative_bytes,solver_iterations,wall_ms\n").unwrap();
    let out = edsl().arg("plot").arg(&csv).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn generate_writes_shards() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("data");
    let out = edsl().arg("generate").arg("--config").arg(&cfg).arg("--out").arg(&data).output().unwrap();
    assert!(out.status.success());
    for f in ["shard_0.csv", "shard_1.csv", "shard_2.csv", "beta_star.csv", "test.csv"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let shard = fs::read_to_string(data.join("shard_0.csv")).unwrap();
    assert_eq!(shard.lines().count(), 41);
}

#[test]
fn worker_refuses_master_id() {
    let out = edsl().args(["worker", "--connect", "127.0.0.1:1", "--machine-id", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
