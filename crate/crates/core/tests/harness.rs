use std::path::Path;
use std::process::Command;
use std::sync::Mutex;

use polid::configuration::configuration_call_count;
use polid::harness::{plot_svg, report_csv, run_experiment, write_report, ExperimentConfig};

fn small_grid(conf: bool) -> ExperimentConfig {
    let text = format!(
        r#"{{
            "env": "discrete_grid",
            "conf": {conf},
            "episodes": [40, 80],
            "seeds": 5,
            "timing": false,
            "train": {{ "steps": 20, "batch_size": 50, "retrain_steps": 5 }},
            "search": {{ "steps": 5, "n_conf": 1 }}
        }}"#
    );
    ExperimentConfig::from_json(&text).unwrap()
}

/// The configuration call counter is process-wide; tests that read it hold this.
static COUNTER: Mutex<()> = Mutex::new(());

fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt();
    (m, 1.96 * sd / n.sqrt())
}

#[test]
fn report_rows_aggregates_and_reproducibility() {
    let _guard = COUNTER.lock().unwrap();
    let cfg = small_grid(false);
    let before = configuration_call_count();
    let report = run_experiment(&cfg, 1).unwrap();
    assert_eq!(configuration_call_count(), before);
    assert_eq!(report.rows.len(), 10);
    assert_eq!(report.aggregates.len(), 4);
    for r in &report.rows {
        assert!(r.error.is_none(), "{:?}", r.error);
        assert!((0.0..=1.0).contains(&r.alpha_hat) && (0.0..=1.0).contains(&r.beta_hat));
        assert_eq!(r.config_rounds, 0);
    }
    for n in [40, 80] {
        let rows: Vec<_> = report.rows.iter().filter(|r| r.n == n).collect();
        let beta: Vec<f64> = rows.iter().map(|r| r.beta_hat).collect();
        let (m, c) = mean_ci(&beta);
        let mean = report.aggregates.iter().find(|a| a.n == n && a.stat == "mean").unwrap();
        let ci = report.aggregates.iter().find(|a| a.n == n && a.stat == "ci95").unwrap();
        assert!((mean.beta_hat - m).abs() < 1e-12 && (ci.beta_hat - c).abs() < 1e-12);
    }

    let csv = report_csv(&report);
    assert_eq!(csv.lines().count(), 1 + 10 + 4);
    assert!(csv.starts_with("env,rule,conf,n,seed,alpha_hat,beta_hat,exact_match,wallclock_s\n"));
    let again = report_csv(&run_experiment(&cfg, 1).unwrap());
    assert_eq!(csv.as_bytes(), again.as_bytes());
}

#[test]
fn conf_and_no_conf_reports_plot_as_two_series() {
    let _guard = COUNTER.lock().unwrap();
    let plain = run_experiment(&small_grid(false), 1).unwrap();
    let before = configuration_call_count();
    let conf = run_experiment(&small_grid(true), 1).unwrap();
    assert!(configuration_call_count() > before);
    assert!(conf.rows.iter().all(|r| r.error.is_none()));

    let dir = tempfile::tempdir().unwrap();
    write_report(&conf, dir.path()).unwrap();
    assert!(dir.path().join("report.csv").exists() && dir.path().join("report.json").exists());

    let joined = report_csv(&plain) + &report_csv(&conf);
    let svg = plot_svg(&joined, "beta").unwrap();
    assert_eq!(svg.matches("<path").count(), 2);
    assert!(plot_svg(&joined, "gamma").is_err());
}

fn polid(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_polid")).args(args).output().unwrap().status.code().unwrap()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    write(&cfg, r#"{ "env": "discrete_grid", "episodes": [20, 30], "seeds": 1, "timing": false, "train": { "steps": 5 } }"#);
    let out = dir.path().join("out");
    assert_eq!(polid(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "1"]), 0);
    let report = out.join("report.csv");
    assert!(report.exists());

    let svg = dir.path().join("beta.svg");
    assert_eq!(polid(&["plot", report.to_str().unwrap(), "--metric", "beta", "--out", svg.to_str().unwrap()]), 0);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<path"));
    assert_eq!(polid(&["plot", report.to_str().unwrap(), "--metric", "gamma"]), 2);

    let bad = dir.path().join("bad.json");
    write(&bad, r#"{ "env": "discrete_grid", "episodez": [30] }"#);
    assert_eq!(polid(&["run", bad.to_str().unwrap()]), 2);
    assert_eq!(polid(&["run", dir.path().join("missing.json").to_str().unwrap()]), 2);

    // output path occupied by a file
    let blocked = dir.path().join("blocked");
    write(&blocked, "");
    assert_eq!(polid(&["run", cfg.to_str().unwrap(), "--out", blocked.to_str().unwrap(), "--jobs", "1"]), 3);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 5);
}
