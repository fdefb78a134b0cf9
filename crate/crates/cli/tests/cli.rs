//! Black-box tests of the command-line interface: file round trips, report
//! shapes, exit codes, and run-to-run determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_intquad")
}

fn run(args: &[&str]) -> Output {
    Command::new(exe()).args(args).output().expect("spawning the binary")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(exe()).current_dir(dir).args(args).output().expect("spawning the binary")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout JSON")
}

fn gen_instance(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("inst_{n}_{seed}.json"));
    let out = run(&[
        "gen",
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn gen_writes_parseable_instances() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_instance(dir.path(), 5, 3);
    let value: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(value["version"], 1);
    assert_eq!(value["n"], 5);
    assert_eq!(value["P"].as_array().unwrap().len(), 5);
    assert_eq!(value["q"].as_array().unwrap().len(), 5);
    assert_eq!(value["meta"]["seed"], 3);
    assert_eq!(value["meta"]["mode"], "gaussian_ils");
}

#[test]
fn gen_count_appends_indices() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("batch.json");
    let out = run(&["gen", "--n", "4", "--count", "3", "--out", stem.to_str().unwrap()]);
    assert!(out.status.success());
    for i in 0..3 {
        assert!(dir.path().join(format!("batch_{i}.json")).exists());
    }
    let listing = String::from_utf8_lossy(&out.stdout);
    assert_eq!(listing.lines().count(), 3);
}

#[test]
fn gen_fixed_spectrum_mode() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.json");
    let out = run(&[
        "gen",
        "--n",
        "3",
        "--omega",
        "1.0,2.0,4.0",
        "--no-scale",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let value: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(value["meta"]["mode"], "fixed_spectrum");
    assert_eq!(value["meta"]["scaled"], false);
}

#[test]
fn bound_reports_ordered_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_instance(dir.path(), 6, 11);
    let report = stdout_json(&run(&["bound", path.to_str().unwrap()]));
    let f_cts = report["f_cts"].as_f64().unwrap();
    let f_scalar = report["f_scalar"].as_f64().unwrap();
    let f_sdp = report["f_sdp"].as_f64().unwrap();
    let f_tr = report["f_tr"].as_f64().unwrap();
    assert!((f_cts + 1.0).abs() <= 1e-9, "scaled instances pin f_cts at -1");
    assert!(f_scalar >= f_cts - 1e-9);
    assert!(f_sdp >= f_scalar - 1e-9);
    assert!(f_tr >= f_cts - 1e-9);
    assert!(report["round_gap_bound"].as_f64().unwrap() > 0.0);
}

#[test]
fn bound_cts_method_skips_dual_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_instance(dir.path(), 4, 2);
    let report = stdout_json(&run(&["bound", path.to_str().unwrap(), "--method", "cts"]));
    assert!(report["f_scalar"].is_null());
    assert!(report["f_sdp"].is_null());
    assert!(report["f_cts"].is_f64());
}

#[test]
fn solve_writes_incumbent_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_instance(dir.path(), 5, 7);
    let trace = dir.path().join("trace.csv");
    let incumbent = stdout_json(&run(&[
        "solve",
        path.to_str().unwrap(),
        "--samples",
        "8",
        "--seed",
        "2",
        "--trace",
        trace.to_str().unwrap(),
    ]));
    assert_eq!(incumbent["x"].as_array().unwrap().len(), 5);
    // The all-zero candidate is always tried, so the best value is <= 0.
    assert!(incumbent["value"].as_f64().unwrap() <= 0.0);
    assert!(incumbent["source"].is_string());

    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,sample_value,oneopt_value,running_best"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8);
    let bests: Vec<f64> = rows
        .iter()
        .map(|r| r.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .collect();
    assert!(bests.windows(2).all(|w| w[1] <= w[0]), "running best must not increase");
}

#[test]
fn solve_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_instance(dir.path(), 6, 9);
    let first = run(&["solve", path.to_str().unwrap(), "--seed", "4"]);
    let second = run(&["solve", path.to_str().unwrap(), "--seed", "4"]);
    assert!(first.status.success() && second.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn exact_sources_agree_on_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_instance(dir.path(), 5, 13);
    let file = path.to_str().unwrap();
    let from_zero = stdout_json(&run(&["exact", file, "--ub", "zero"]));
    let from_best = stdout_json(&run(&["exact", file, "--ub", "best1opt"]));
    let from_value = stdout_json(&run(&["exact", file, "--ub", "value:0.0"]));
    let v0 = from_zero["value"].as_f64().unwrap();
    assert_eq!(v0, from_best["value"].as_f64().unwrap());
    assert_eq!(v0, from_value["value"].as_f64().unwrap());
    for report in [&from_zero, &from_best, &from_value] {
        assert_eq!(report["proved_optimal"], true);
        assert!(!report["x"].is_null());
    }
    // A tighter starting bound can only prune more.
    assert!(
        from_best["nodes_visited"].as_u64().unwrap()
            <= from_zero["nodes_visited"].as_u64().unwrap()
    );
}

#[test]
fn bench_prints_aggregate_table() {
    let out = run(&["bench", "--sizes", "4", "--count", "3", "--seed", "5"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("n,count,mean_f_cts,"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("4,3,"));
    assert_eq!(lines.next(), None);
}

#[test]
fn bench_out_writes_sibling_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["bench", "--sizes", "3,5", "--count", "2", "--seed", "6", "--out", "t.csv"],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let medians = std::fs::read_to_string(dir.path().join("t_medians.csv")).unwrap();
    let instances = std::fs::read_to_string(dir.path().join("t_instances.csv")).unwrap();
    assert_eq!(table.lines().count(), 3, "header plus one row per size");
    assert!(medians.starts_with("n,count,median_f_cts,"));
    assert_eq!(instances.lines().count(), 5, "header plus one row per instance");
}

#[test]
fn help_and_version_exit_zero() {
    for flag in ["--help", "--version"] {
        let out = run(&[flag]);
        assert_eq!(out.status.code(), Some(0), "{flag} must exit 0");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_one() {
    let cases: &[&[&str]] = &[
        &["bound", "/nonexistent/instance.json"],
        &["bench", "--sizes", "5,x", "--count", "1"],
        &["bench", "--sizes", "5", "--count", "0"],
        &["gen", "--n", "4", "--count", "0", "--out", "unused.json"],
        &["definitely-not-a-subcommand"],
    ];
    for args in cases {
        let out = run(args);
        assert_eq!(out.status.code(), Some(1), "args {args:?}");
        assert!(!out.stderr.is_empty(), "args {args:?} must explain the failure");
    }
}

#[test]
fn unknown_ub_source_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_instance(dir.path(), 4, 1);
    let out = run(&["exact", path.to_str().unwrap(), "--ub", "bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus"), "stderr names the bad source: {err}");
}

/// Identity quadratic with q = (-0.6, 0.4): optimum -0.2 at (1, 0). Frozen
/// end-to-end values for all three single-instance subcommands.
#[test]
fn handwritten_instance_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e1.json");
    std::fs::write(
        &path,
        r#"{"version":1,"n":2,"P":[[1.0,0.0],[0.0,1.0]],"q":[-0.6,0.4],"offset":0.0}"#,
    )
    .unwrap();
    let file = path.to_str().unwrap();

    let report = stdout_json(&run(&["bound", file, "--method", "scalar"]));
    assert!((report["f_scalar"].as_f64().unwrap() + 0.2).abs() <= 1e-9);
    assert!(report["f_sdp"].is_null());

    let incumbent = stdout_json(&run(&["solve", file]));
    assert!((incumbent["value"].as_f64().unwrap() + 0.2).abs() <= 1e-9);
    assert_eq!(incumbent["x"].as_array().unwrap().as_slice(), &[Value::from(1), Value::from(0)]);

    let exact = stdout_json(&run(&["exact", file, "--ub", "zero"]));
    assert!((exact["value"].as_f64().unwrap() + 0.2).abs() <= 1e-9);
    assert_eq!(exact["proved_optimal"], true);
}

#[test]
fn malformed_instance_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\"version\": 1, \"n\": 2").unwrap();
    let out = run(&["bound", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
