use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
[map]
text = """
......
.##...
......
...#..
......
......
"""

[events]
bound = 1
generate = "binomial"

[agent]
kind = "adt_greedy"
baseline = "patrol"

[agent.learner]
max_steps = 300
warmup_steps = 64
batch_size = 8
eval_interval = 150
eval_steps = 50
tau = 50

[run]
instances = 3
seed = 5
horizon = 2000
"#;

fn areasweep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_areasweep")).args(args).env("AREASWEEP_WORKERS", "1").output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn compare(config: &Path, out: &Path) -> String {
    let o = areasweep(&["compare", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::read_to_string(out).unwrap()
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = areasweep(&["compare"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(areasweep(&["sweep"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one_with_one_line() {
    let o = areasweep(&["patrol", "--config", "/nonexistent/experiment.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "));
}

#[test]
fn report_has_a_row_per_instance_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let text = compare(&cfg, &dir.path().join("r.csv"));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 3 + 1);
    let cols = |l: &str| l.split(',').map(str::to_owned).collect::<Vec<_>>();
    let rows: Vec<Vec<String>> = lines[1..4].iter().map(|l| cols(l)).collect();
    let mean = cols(lines[4]);
    assert_eq!(mean[0], "mean");
    for col in 4..10 {
        let avg = rows.iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / 3.0;
        assert!((avg - mean[col].parse::<f64>().unwrap()).abs() < 1e-9, "column {col}");
    }
}

#[test]
fn compare_is_bit_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let trained = SMALL.replace("kind = \"adt_greedy\"", "kind = \"dps_max\"").replace("instances = 3", "instances = 2");
    let cfg = write_config(dir.path(), "det.toml", &trained);
    let a = compare(&cfg, &dir.path().join("a.csv"));
    let b = compare(&cfg, &dir.path().join("b.csv"));
    assert_eq!(a, b);
}

#[test]
fn self_comparison_is_zero_percent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "self.toml", &SMALL.replace("baseline = \"patrol\"", "baseline = \"adt_greedy\""));
    let text = compare(&cfg, &dir.path().join("s.csv"));
    let mean: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    assert_eq!(mean[8].parse::<f64>().unwrap(), 0.0);
    assert_eq!(mean[9].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn seed_flag_changes_the_instances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let a = compare(&cfg, &dir.path().join("a.csv"));
    let o = areasweep(&["compare", "--config", cfg.to_str().unwrap(), "--seed", "77"]);
    assert!(o.status.success());
    assert_ne!(a, String::from_utf8(o.stdout).unwrap());
}

#[test]
fn trained_checkpoint_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let ckpt = dir.path().join("agent.bin");
    let diag = dir.path().join("diag.csv");
    let (c, k, d) = (cfg.to_str().unwrap(), ckpt.to_str().unwrap(), diag.to_str().unwrap());
    let o = areasweep(&["train", "--config", c, "--checkpoint", k, "--out", d]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&diag).unwrap().lines().count() > 1);
    let log = dir.path().join("run.csv");
    let o = areasweep(&["eval", "--config", c, "--checkpoint", k, "--out", log.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("checkpoint: adt"));
    assert!(fs::read_to_string(&log).unwrap().lines().count() > 10);
}

#[test]
fn oracle_prints_the_optimal_gain() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny3x3.toml");
    let o = areasweep(&["oracle", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rho: f64 = text.split_whitespace().nth(1).unwrap().parse().unwrap();
    let enumerated: f64 = text.lines().nth(1).unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((rho - enumerated).abs() < 1e-8);
    assert_eq!(text.lines().count(), 2 + 8);
}

#[test]
fn oracle_rejects_other_generators() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    assert_eq!(areasweep(&["oracle", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}
