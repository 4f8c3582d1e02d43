use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn dropf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dropf"))
        .args(args)
        .env_remove("DROPF_BACKEND")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_writes_report_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let case = data("three_bus.json");
    let out = dropf(&[
        "solve",
        "--case",
        path_str(&case),
        "--method",
        "dr-u",
        "--train",
        "2000",
        "-o",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "optimal");
    assert_eq!(report["method"], "dr-u");
    assert!(report.get("time_total").is_none());
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("status      optimal"));
    assert!(!dir.path().join("timings.json").exists());
}

#[test]
fn solve_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let case = data("three_bus.json");
    let run = |sub: &str| {
        let target = dir.path().join(sub);
        let out = dropf(&[
            "solve",
            "--case",
            path_str(&case),
            "--method",
            "ops3",
            "-k",
            "4",
            "--timings",
            "-o",
            path_str(&target),
        ]);
        assert_eq!(code(&out), 0);
        assert!(target.join("timings.json").exists());
        fs::read(target.join("report.json")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn missing_case_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dropf(&[
        "solve",
        "--case",
        "no/such/case.json",
        "-o",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/case.json"));
}

#[test]
fn usage_errors_exit_with_input_code() {
    assert_eq!(code(&dropf(&["solve", "--no-such-flag"])), 1);
    assert_eq!(code(&dropf(&["--help"])), 0);
}

#[test]
fn infeasible_case_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(data("three_bus.json")).unwrap();
    let heavy = text.replace("\"load\": 220", "\"load\": 500");
    assert_ne!(heavy, text);
    let case = dir.path().join("heavy.json");
    fs::write(&case, heavy).unwrap();
    let out = dropf(&[
        "solve",
        "--case",
        path_str(&case),
        "--method",
        "ar",
        "-o",
        path_str(&dir.path().join("out")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn iteration_limit_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dropf(&[
        "solve",
        "--case",
        path_str(&data("three_bus.json")),
        "--max-iter",
        "1",
        "-o",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn indefinite_unimodal_model_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = dropf(&[
        "solve",
        "--case",
        path_str(&data("three_bus.json")),
        "--model",
        path_str(&data("bad_unimodal_model.json")),
        "-o",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("validate_unimodal_model"));

    // The moment-only method does not need the unimodal matrix.
    let out = dropf(&[
        "solve",
        "--case",
        path_str(&data("three_bus.json")),
        "--model",
        path_str(&data("bad_unimodal_model.json")),
        "--method",
        "dr-m",
        "-o",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0);
}

#[test]
fn unknown_backend_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dropf"))
        .args([
            "solve",
            "--case",
            path_str(&data("three_bus.json")),
            "-o",
            path_str(dir.path()),
        ])
        .env("DROPF_BACKEND", "nonexistent")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn ops_table_rows_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let run = |name: &str| {
        let target = dir.path().join(name);
        let out = dropf(&[
            "ops-table",
            "--cache",
            path_str(&cache),
            "-o",
            path_str(&target),
        ]);
        assert_eq!(code(&out), 0);
        fs::read_to_string(target).unwrap()
    };
    let first = run("a.csv");
    let second = run("b.csv");
    assert_eq!(first, second);
    let emax: Vec<f64> = first
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(emax.len(), 5);
    assert!(emax.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn ops_table_rejects_bad_epsilon() {
    assert_eq!(code(&dropf(&["ops-table", "--epsilon", "0.7"])), 1);
}

#[test]
fn gen_samples_is_seeded() {
    let a = dropf(&["gen-samples", "--dim", "3", "--count", "20", "--seed", "9"]);
    let b = dropf(&["gen-samples", "--dim", "3", "--count", "20", "--seed", "9"]);
    let c = dropf(&["gen-samples", "--dim", "3", "--count", "20", "--seed", "10"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("w1,w2,w3\n"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn validate_case_checks_samples() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("s.csv");
    let gen_out = dropf(&[
        "gen-samples",
        "--dim",
        "5",
        "--count",
        "500",
        "-o",
        path_str(&samples),
    ]);
    assert_eq!(code(&gen_out), 0);
    let out = dropf(&[
        "validate-case",
        "--case",
        path_str(&data("three_bus.json")),
        "--samples",
        path_str(&samples),
    ]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("wind plants 5"));

    let narrow = dir.path().join("n.csv");
    dropf(&[
        "gen-samples",
        "--dim",
        "2",
        "--count",
        "50",
        "-o",
        path_str(&narrow),
    ]);
    let out = dropf(&[
        "validate-case",
        "--case",
        path_str(&data("three_bus.json")),
        "--samples",
        path_str(&narrow),
    ]);
    assert_eq!(code(&out), 1);
}

fn small_benchmark(case: &Path, out: &Path, jobs: &str, timings: bool) -> Output {
    let mut args = vec![
        "benchmark",
        "--case",
        path_str(case),
        "--train",
        "1000",
        "--test",
        "2000",
        "--seeds",
        "4,5",
        "--sweep",
        "2,3",
        "-j",
        jobs,
        "-o",
        path_str(out),
    ];
    if timings {
        args.push("--timings");
    }
    dropf(&args)
}

#[test]
fn benchmark_outputs_do_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let case = data("three_bus.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&small_benchmark(&case, &a, "1", true)), 0);
    assert_eq!(code(&small_benchmark(&case, &b, "3", false)), 0);
    for f in ["metrics.csv", "sweep.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert!(a.join("timings.csv").exists());
    assert!(!b.join("timings.csv").exists());
}

#[test]
fn zero_wind_benchmark_rows_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_benchmark(&data("three_bus_no_wind.json"), dir.path(), "2", false);
    assert_eq!(code(&out), 0);
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let costs: Vec<&str> = metrics
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap())
        .collect();
    assert!(!costs.is_empty());
    assert!(costs.iter().all(|c| *c == costs[0]), "{metrics}");
}
