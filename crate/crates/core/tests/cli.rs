use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn graphbandit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphbandit")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_results_summary_and_probability_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = graphbandit(&[
        "simulate", "--algo", "exp3", "--algo", "exp3-ip", "--K", "4", "--T", "400", "--runs", "2", "--p",
        "uniform:0.25,0.5", "--out", path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.starts_with("t,algorithm,metric,mean,std\n"));
    assert_eq!(results.lines().count(), 1 + 2 * 200);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);

    let log = fs::read_to_string(out.join("probabilities.csv")).unwrap();
    let rows: Vec<Vec<String>> = log.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 2 * 16);
    for r in &rows {
        let (i, j): (usize, usize) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        assert!((1..=4).contains(&i) && (1..=4).contains(&j));
        let p: f64 = r[3].parse().unwrap();
        assert!((0.25..=0.5).contains(&p));
    }
}

#[test]
fn graph_file_probabilities_are_used_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.txt");
    fs::write(&graph, "K=3\n# a star around expert 1\nedge 1 1 0.9\nedge 2 2 0.8\nedge 3 3 0.7\nedge 1 3 0.4\n").unwrap();
    let out = dir.path().join("run");
    let o = graphbandit(&[
        "simulate", "--algo", "exp3-ip", "--graph", path_str(&graph), "--T", "50", "--runs", "1", "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(out.join("probabilities.csv")).unwrap();
    assert_eq!(log, "seed,i,j,p\n0,1,1,0.9\n0,1,3,0.4\n0,2,2,0.8\n0,3,3,0.7\n");
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let no_loop = dir.path().join("bad.txt");
    fs::write(&no_loop, "K=2\nedge 1 1\nedge 1 2\n").unwrap();
    let out = dir.path().join("run");
    let cases: Vec<Vec<&str>> = vec![
        vec!["simulate", "--algo", "exp3-ip", "--uninformative", "--K", "3", "--T", "10"],
        vec!["simulate", "--algo", "exp3", "--graph", path_str(&no_loop), "--T", "10"],
        vec!["simulate", "--algo", "exp3", "--K", "3", "--T", "10", "--p", "uniform:0.6,0.2"],
        vec!["simulate", "--algo", "exp3", "--T", "10"],
        vec!["simulate", "--algo", "nope", "--K", "3", "--T", "10"],
        vec!["simulate", "--algo", "exp3", "--K", "3", "--T", "10", "--schedule", "fixed:-1"],
        vec!["simulate", "--algo", "exp3", "--K", "3", "--T", "10", "--runs", "0"],
        vec!["dataset", "--algo", "exp3", "--data", "/nonexistent.csv", "--target", "y"],
    ];
    for args in cases {
        let mut args = args.clone();
        args.extend(["--out", path_str(&out)]);
        let o = graphbandit(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(threads);
        let o = Command::new(env!("CARGO_BIN_EXE_graphbandit"))
            .env("GRAPHBANDIT_THREADS", threads)
            .args([
                "simulate", "--algo", "exp3-up", "--algo", "exp3-gr", "--algo", "exp3-dom", "--K", "5", "--T", "600",
                "--runs", "4", "--seed", "9", "--out", path_str(&out),
            ])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files.push((fs::read(out.join("results.csv")).unwrap(), fs::read(out.join("summary.csv")).unwrap()));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn invalid_thread_count_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_graphbandit"))
        .env("GRAPHBANDIT_THREADS", "zero")
        .args(["simulate", "--algo", "exp3", "--K", "2", "--T", "5", "--out", path_str(dir.path())])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dataset_pipeline_reports_mse() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let o = graphbandit(&["synth", "--rows", "500", "--seed", "3", "--out", path_str(&data)]);
    assert!(o.status.success());
    let out = dir.path().join("run");
    let o = graphbandit(&[
        "dataset", "--algo", "exp3-up", "--algo", "exp3-gr", "--data", path_str(&data), "--target", "y", "--runs",
        "2", "--uninformative", "--out", path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("exp3-up,mse,"));
    assert!(summary.contains("exp3-gr,regret,"));

    let o = graphbandit(&["dataset", "--algo", "exp3", "--data", path_str(&data), "--target", "x99"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_suite_passes_at_small_sizes() {
    let o = graphbandit(&["oracle", "--draws", "20000", "--replicates", "10", "--seed", "4"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 11);
}
