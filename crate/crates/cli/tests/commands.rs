//! End-to-end runs of the `subpop` binary.

use std::path::Path;
use std::process::{Command, Output};

fn subpop(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subpop"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn simulate_fit_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = subpop(&["simulate", "--n1", "1500", "--n0", "1500", "--seed", "7", "--out", "data.csv"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("data.truth.csv").exists());

    let o = subpop(&["fit", "--data", "data.csv", "--beta-method", "kl", "--out", "model.json"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let art = subpop_cli::parse_fit_json(&std::fs::read_to_string(d.join("model.json")).unwrap()).unwrap();
    let p = &art.proportions;
    assert!((p.beta10 + p.beta00 - p.rho).abs() < 1e-12);
    assert_eq!(p.method, "kl");

    let o = subpop(&["predict", "--model", "model.json", "--data", "data.csv", "--out", "pred.csv"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let preds = std::fs::read_to_string(d.join("pred.csv")).unwrap();
    assert_eq!(preds.lines().count(), 1501);

    let o = subpop(&["evaluate", "--predictions", "pred.csv", "--truth", "data.truth.csv"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let tags: Vec<&str> = report.as_array().unwrap().iter().map(|t| t["tag"].as_str().unwrap()).collect();
    assert_eq!(tags, ["eta", "eta1", "eta0", "xi", "xi1", "xi0"]);
    assert_eq!(report[0]["n_eval"], 1500);
}

#[test]
fn split_then_fit_with_oracle_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // A labeled pool: simulate, then relabel every target row from the truth table.
    subpop(&["simulate", "--n1", "10", "--n0", "3000", "--seed", "1", "--out", "raw.csv"], d);
    let raw = std::fs::read_to_string(d.join("raw.csv")).unwrap();
    let truth = subpop_core::synthgen::parse_truth_csv(&std::fs::read_to_string(d.join("raw.truth.csv")).unwrap()).unwrap();
    let labels: std::collections::HashMap<usize, u8> = truth.iter().map(|t| (t.row_index, t.y_true)).collect();
    let mut pool = String::new();
    for (i, line) in raw.lines().enumerate() {
        if i == 0 {
            pool.push_str(line);
        } else if let Some(y) = labels.get(&(i - 1)) {
            let rest = line.splitn(3, ',').nth(2).unwrap();
            pool.push_str(&format!("1,{y},{rest}"));
        } else {
            continue;
        }
        pool.push('\n');
    }
    std::fs::write(d.join("pool.csv"), pool).unwrap();

    let o = subpop(&["split", "--pool", "pool.csv", "--a", "0.5", "--b", "0.5", "--c", "0.5", "--seed", "3", "--out", "s.csv"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = subpop(
        &["fit", "--data", "s.csv", "--beta-method", "oracle", "--beta01-method", "oracle", "--truth", "s.truth.csv", "--out", "m.json"],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let art = subpop_cli::parse_fit_json(&std::fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert_eq!(art.proportions.method, "oracle");
}

#[test]
fn experiment_writes_metrics_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("exp.toml"),
        "replications = 3\nseed = 1\noutput_dir = \"ignored\"\n[synthetic]\nn1 = 800\nn0 = 800\n",
    )
    .unwrap();
    // flags win over the file
    let o = subpop(&["experiment", "--config", "exp.toml", "--output-dir", "out", "--replications", "2"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!d.join("ignored").exists());
    let metrics = std::fs::read_to_string(d.join("out/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next().unwrap(), subpop_cli::experiment::METRICS_HEADER);
    assert_eq!(metrics.lines().count(), 1 + 2 * 6);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("out/summary.json")).unwrap()).unwrap();
    for tag in ["eta", "eta1", "eta0", "xi", "xi1", "xi0"] {
        for stat in ["mean", "sd", "median", "q1", "q3"] {
            assert!(summary["tags"][tag]["accuracy"][stat].is_number(), "{tag} {stat}");
        }
    }
    assert!(summary["beta_abs_error_mean"]["beta10"].is_number());
}

#[test]
fn experiment_from_flags_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = subpop(
        &["experiment", "--n1", "600", "--n0", "600", "--beta-method", "moment", "--output-dir", "o"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("o/metrics.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // usage
    assert_eq!(code(&subpop(&[], d)), 1);
    assert_eq!(code(&subpop(&["fit", "--data"], d)), 1);
    assert_eq!(code(&subpop(&["simulate", "--n1", "x", "--n0", "1", "--out", "a.csv"], d)), 1);
    std::fs::write(d.join("zero.toml"), "replications = 0\n[synthetic]\nn1 = 5\nn0 = 5\n").unwrap();
    assert_eq!(code(&subpop(&["experiment", "--config", "zero.toml"], d)), 1);
    assert_eq!(code(&subpop(&["experiment", "--config", "missing.toml"], d)), 1);
    assert_eq!(code(&subpop(&["--help"], d)), 0);

    // data
    assert_eq!(code(&subpop(&["fit", "--data", "missing.csv", "--out", "m.json"], d)), 2);
    std::fs::write(d.join("bad.csv"), "r,y,a,x1\n1,1,1,0.5\n0,,0,1.0\n").unwrap();
    assert_eq!(code(&subpop(&["fit", "--data", "bad.csv", "--out", "m.json"], d)), 2);
    std::fs::write(d.join("junk.json"), "{}").unwrap();
    assert_eq!(
        code(&subpop(&["predict", "--model", "junk.json", "--data", "bad.csv", "--out", "p.csv"], d)),
        2
    );

    // estimation
    subpop(&["simulate", "--n1", "400", "--n0", "400", "--out", "data.csv"], d);
    let o = subpop(
        &["fit", "--data", "data.csv", "--beta-method", "moment", "--moment-direction", "0,0,0,0", "--out", "m.json"],
        d,
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(d.join("tiny.toml"), "replications = 2\n[synthetic]\nn1 = 1\nn0 = 20\n").unwrap();
    assert_eq!(code(&subpop(&["experiment", "--config", "tiny.toml", "--output-dir", "t"], d)), 3);
}
