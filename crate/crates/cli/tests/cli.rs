use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lookahead-lab"))
        .args(args)
        .arg("--output")
        .arg(out)
        .env("LOOKAHEAD_LAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

/// Data rows (without the meta and header lines) split on commas.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(2).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn nqm_dynamics_first_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["nqm-dynamics", "--gamma", "0.5", "--steps", "4"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(dir.path(), "nqm_dynamics.csv");
    assert!(text.starts_with("# {"));
    let r = rows(&text);
    assert_eq!(r.len(), 5);
    assert_eq!(r[1][2..4], ["0.5", "0.25"]);
}

#[test]
fn nqm_dynamics_alpha_one_columns_agree() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["nqm-dynamics", "--gamma", "0.3", "--alpha", "1", "--k", "3", "--spectrum", "inverse", "--n", "4"], dir.path());
    assert_eq!(code(&o), 0);
    let r = rows(&read(dir.path(), "nqm_dynamics.csv"));
    assert_eq!(r.len(), 21 * 4);
    for row in r {
        assert_eq!(row[2..5], row[5..8]);
    }
}

#[test]
fn usage_and_stability_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&lab(&["nqm-dynamics"], dir.path())), 2);
    assert_eq!(code(&lab(&["nqm-dynamics", "--gama", "0.5"], dir.path())), 2);
    let o = lab(&["nqm-dynamics", "--gamma", "2.5"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("2/L"));
    assert!(!dir.path().join("nqm_dynamics.csv").exists());

    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"gamma": 0.5, "unknown": 1}"#).unwrap();
    assert_eq!(code(&lab(&["nqm-dynamics", "--config", cfg.to_str().unwrap()], dir.path())), 2);
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&lab(&["nqm-dynamics", "--config", missing.to_str().unwrap()], dir.path())), 2);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"gamma": 0.1, "steps": 2}"#).unwrap();
    let o = lab(&["nqm-dynamics", "--config", cfg.to_str().unwrap(), "--gamma", "0.5"], dir.path());
    assert_eq!(code(&o), 0);
    let text = read(dir.path(), "nqm_dynamics.csv");
    assert!(text.lines().next().unwrap().contains("\"gamma\":0.5"));
    assert_eq!(rows(&text).len(), 3);
}

#[test]
fn nqm_sweep_row_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    let spec = r#"{"learning_rates": [0.01, 0.05, 0.2], "alphas": [0.3, 0.6, 1.0, 0.9], "k": 5, "horizon": 50,
                   "spectrum": "inverse", "n": 10}"#;
    fs::write(&cfg, format!(r#"{{"convergence": {spec}, "finite_horizon": {spec}}}"#)).unwrap();
    let args = ["nqm-sweep", "--config", cfg.to_str().unwrap()];
    assert_eq!(code(&lab(&args, dir.path())), 0);
    let conv = read(dir.path(), "nqm_convergence.csv");
    assert_eq!(rows(&conv).len(), 3 * (1 + 4));
    assert_eq!(rows(&read(dir.path(), "nqm_finite_horizon.csv")).len(), 10);
    assert_eq!(code(&lab(&args, dir.path())), 0);
    assert_eq!(read(dir.path(), "nqm_convergence.csv"), conv);
}

#[test]
fn quad_rate_defaults_in_meta() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["quad-rate", "--kappas", "1,100,10000"], dir.path());
    assert_eq!(code(&o), 0);
    let text = read(dir.path(), "quad_rate.csv");
    let meta = text.lines().next().unwrap();
    assert!(meta.contains("\"k\":20") && meta.contains("\"alpha\":0.5") && meta.contains("\"beta\":0.9"));
    let r = rows(&text);
    assert_eq!(r.len(), 6);
    let rate = |i: usize| r[i][3].parse::<f64>().unwrap();
    assert!(rate(3) < rate(2), "lookahead should win at kappa 100");
}

#[test]
fn taylor_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["taylor-check", "--samples", "100"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "taylor_report.json")).unwrap();
    assert_eq!(report["meta"]["command"], "taylor-check");
    for section in ["quadratic", "logistic", "footnote"] {
        assert_eq!(report[section]["pass"], true, "{section}");
    }
    assert!(report["quadratic"]["full_order_max_error"].as_f64().unwrap() < 1e-10);
}

#[test]
fn train_run_self_test_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["train", "--epochs", "3", "--self-test", "--inner", "momentum", "--beta", "0.5", "--seed", "4"];
    let o = lab(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("self-test"));
    let jsonl = read(dir.path(), "run.jsonl");
    let lines: Vec<&str> = jsonl.lines().collect();
    assert!(lines[0].starts_with("# "));
    assert_eq!(lines.len(), 1 + 3 * 16);
    let last: serde_json::Value = serde_json::from_str(lines[48]).unwrap();
    assert!(last["held_out_loss"].is_number());
    let summary = rows(&read(dir.path(), "summary.csv"));
    assert_eq!(summary[0][1], "momentum");
    assert_eq!(summary[0][5], "4");
    assert_eq!(code(&lab(&args, dir.path())), 0);
    assert_eq!(read(dir.path(), "run.jsonl"), jsonl);
}

#[test]
fn train_sweep_and_partial_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.json");
    fs::write(
        &cfg,
        r#"{"grid": {"learning_rates": [0.05, 5.0], "momenta": [0.0], "ks": [4], "alphas": [0.5, 1.0]},
            "run": {"epochs": 2}}"#,
    )
    .unwrap();
    let o = lab(&["train", "--sweep", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 4);
    let r = rows(&read(dir.path(), "sweep.csv"));
    assert_eq!(r.len(), 2 * 3);
    assert_eq!(r[0][4], r[2][4]);
    assert!(r[3..].iter().all(|row| row[6] == "true"));
}

#[test]
fn train_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["train", "--trace", "--epochs", "1", "--k", "4"], dir.path());
    assert_eq!(code(&o), 0);
    let r = rows(&read(dir.path(), "trace.csv"));
    assert_eq!(r.len(), 16 + 4);
    assert_eq!(r[4][1], "outer");
}

#[test]
fn adaptive_demo_alphas_clipped() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["adaptive-alpha-demo", "--alpha-low", "0.3", "--epochs", "2"], dir.path());
    assert_eq!(code(&o), 0);
    let r = rows(&read(dir.path(), "adaptive_alpha.csv"));
    let alphas: Vec<f64> = r.iter().filter(|row| !row[3].is_empty()).map(|row| row[3].parse().unwrap()).collect();
    assert_eq!(alphas.len(), r.len() / 5);
    assert!(alphas.iter().all(|a| (0.3..=1.0).contains(a)));
}

#[test]
fn bad_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lookahead-lab"))
        .args(["nqm-dynamics", "--gamma", "0.5", "--output"])
        .arg(dir.path())
        .env("LOOKAHEAD_LAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
