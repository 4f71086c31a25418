use std::process::{Command, Output};

fn admm_net(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_admm-net"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn run_prints_summary_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let out = admm_net(&["run", "--max-iter", "5", "--seed", "3", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    for key in ["algorithm = ic-admm", "rounds = 5", "[config]", "seed = 3"] {
        assert!(text.contains(key), "missing {key:?} in\n{text}");
    }
    let trace = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(trace.lines().count(), 7);
    assert!(dir.path().join("trace.csv.summary.txt").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "agents = 4\nnot_a_key = 1\n").unwrap();
    let out = admm_net(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_key"));
}

#[test]
fn compare_rejects_mismatched_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.cfg");
    let b = dir.path().join("b.cfg");
    std::fs::write(&a, "seed = 1\nmax_outer = 3\n").unwrap();
    std::fs::write(&b, "seed = 2\nmax_outer = 3\n").unwrap();
    let out = admm_net(&["compare", "--config", a.to_str().unwrap(), "--config", b.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn compare_by_algorithm_list_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("table.csv");
    let out = admm_net(&["compare", "--algo", "c-admm,ic-admm", "--max-iter", "5", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("algorithm,rounds,"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn gen_graph_reports_spectrum() {
    let out = admm_net(&["gen-graph", "--seed", "7"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("lambda_min_d_plus_w"));
    assert!(text.contains("agents = "));
}

#[test]
fn gen_data_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = admm_net(&["gen-data", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["matrix.csv", "response.csv", "planted.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn tune_beta_needs_an_inexact_method() {
    let ok = admm_net(&["tune-beta", "--algo", "ic-admm"]);
    assert!(ok.status.success());
    let text = stdout(&ok);
    assert!(text.starts_with("agent,beta_min,beta\n"));
    for line in text.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert!(cols[1] > cols[0]);
    }
    assert!(!admm_net(&["tune-beta", "--algo", "c-admm"]).status.success());
}
