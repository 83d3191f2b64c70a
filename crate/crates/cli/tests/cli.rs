use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mmw-gate");

fn table1() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table1.toml")
}

fn mmw(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("MMW_GATE_OUT")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(&path, "num_ues = 2\nnum_aps = 2\ngrt_s = 600.0\nrng_seed = 5\n").unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_reference_scenario() {
    let out = mmw(&["validate", "--config", s(&table1())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("num_ues = 14"));
    assert!(text.contains("ap_positions"));
}

#[test]
fn validate_reports_every_bad_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "alpha = 1.5\ndelta_frac = 0.3\n").unwrap();
    let out = mmw(&["validate", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("alpha"), "{err}");
    assert!(err.contains("delta_frac"), "{err}");
}

#[test]
fn unknown_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.toml");
    fs::write(&path, "alpah = 1.0\n").unwrap();
    assert_eq!(mmw(&["validate", "--config", s(&path)]).status.code(), Some(1));
}

#[test]
fn run_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = mmw(&["run", "--config", s(&cfg), "--seed", "9", "--out", s(out), "--trace"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in [
        "results.csv",
        "events.csv",
        "workload.csv",
        "decisions.csv",
        "manifest.txt",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn workload_replay_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let first = dir.path().join("first");
    assert!(mmw(&["run", "--config", s(&cfg), "--out", s(&first)]).status.success());
    let again = dir.path().join("again");
    let wl = first.join("workload.csv");
    assert!(
        mmw(&["run", "--config", s(&cfg), "--out", s(&again), "--workload", s(&wl)])
            .status
            .success()
    );
    assert_eq!(
        fs::read(first.join("results.csv")).unwrap(),
        fs::read(again.join("results.csv")).unwrap()
    );
}

#[test]
fn sweep_grid_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sweep");
    let o = mmw(&[
        "sweep",
        "--config",
        s(&cfg),
        "--aps",
        "1,2,3,4",
        "--grt",
        "0.5,1,1.5,2",
        "--seeds",
        "20",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 336);
    assert_eq!(rows.iter().filter(|r| r.split(',').nth(4) == Some("mean")).count(), 16);
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("# seeds: 5,6,7,"));
    assert!(out.join("summary.csv").exists());
}

#[test]
fn sweep_rows_are_reproducible_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sweep");
    assert!(mmw(&[
        "sweep",
        "--config",
        s(&cfg),
        "--aps",
        "2",
        "--grt",
        "0.25",
        "--seeds",
        "3",
        "--out",
        s(&out)
    ])
    .status
    .success());
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    let row = results.lines().nth(2).unwrap();
    let seed = row.split(',').nth(4).unwrap();

    // The manifest body is a complete scenario file.
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    let scenario = dir.path().join("from_manifest.toml");
    let body = manifest.replace("grt_s = 600.0", "grt_s = 900.0");
    fs::write(&scenario, body).unwrap();
    let single = dir.path().join("single");
    assert!(
        mmw(&["run", "--config", s(&scenario), "--seed", seed, "--out", s(&single)])
            .status
            .success()
    );
    let rerun = fs::read_to_string(single.join("results.csv")).unwrap();
    assert_eq!(rerun.lines().nth(1).unwrap(), row);
}

#[test]
fn fairness_grid_covers_schedulers_and_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("fair");
    let o = mmw(&[
        "fairness",
        "--config",
        s(&cfg),
        "--schedulers",
        "wpf,pf,rr",
        "--speed-ratios",
        "1,4",
        "--aps",
        "2",
        "--grt",
        "0.2",
        "--seeds",
        "2",
        "--mobility",
        "directed",
        "--jobs",
        "2",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 2 * 2 + 3 * 2);
    for sched in ["wpf", "pf", "rr"] {
        assert!(
            text.lines().any(|l| l.starts_with(&format!("{sched},2,720"))),
            "{sched}"
        );
    }
    assert!(fs::read_to_string(out.join("manifest.txt"))
        .unwrap()
        .contains("mode = \"directed\""));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("env_out");
    let o = Command::new(BIN)
        .args(["run", "--config", s(&cfg)])
        .env("MMW_GATE_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("results.csv").exists());
}

#[test]
fn io_failure_exits_two_without_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let blocker = dir.path().join("not_a_dir");
    fs::write(&blocker, "").unwrap();
    let o = mmw(&["run", "--config", s(&cfg), "--out", s(&blocker.join("sub"))]);
    assert_eq!(o.status.code(), Some(2));

    let missing = dir.path().join("missing.toml");
    assert_eq!(mmw(&["validate", "--config", s(&missing)]).status.code(), Some(2));
}

#[test]
fn invalid_grid_point_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sweep");
    let o = mmw(&[
        "sweep",
        "--config",
        s(&cfg),
        "--aps",
        "5",
        "--grt",
        "0.5",
        "--seeds",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("num_aps"));
    assert!(!out.join("results.csv").exists());
}
