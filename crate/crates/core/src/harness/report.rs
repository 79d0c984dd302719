//! CSV and JSON output.

use std::fs;
use std::path::Path;

use super::run::{strategy_summary, RunReport};
use crate::error::{Error, Result};

pub const REPORT_HEADER: [&str; 9] =
    ["env", "rule", "conf", "n", "seed", "alpha_hat", "beta_hat", "exact_match", "wallclock_s"];
pub const STRATEGY_HEADER: [&str; 4] = ["seed", "strategy", "omega", "return"];

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

fn to_csv(header: &[&str], records: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in records {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Per-seed rows followed by `mean` and `ci95` rows for each episode count.
pub fn report_csv(report: &RunReport) -> String {
    let c = &report.config;
    let prefix = [c.env.as_str().to_string(), c.rule.as_str().to_string(), c.conf.to_string()];
    let mut records = Vec::new();
    for r in &report.rows {
        let exact = match (&r.error, r.exact_match) {
            (Some(_), _) => "NaN",
            (None, true) => "1",
            (None, false) => "0",
        };
        let mut rec = prefix.to_vec();
        rec.extend([
            r.n.to_string(),
            r.seed.to_string(),
            num(r.alpha_hat),
            num(r.beta_hat),
            exact.into(),
            num(r.wallclock_s),
        ]);
        records.push(rec);
    }
    for a in &report.aggregates {
        let mut rec = prefix.to_vec();
        rec.extend([
            a.n.to_string(),
            a.stat.clone(),
            num(a.alpha_hat),
            num(a.beta_hat),
            num(a.exact_match),
            num(a.wallclock_s),
        ]);
        records.push(rec);
    }
    to_csv(&REPORT_HEADER, records)
}

/// Per-seed strategy returns followed by `mean` and `ci95` rows.
pub fn strategies_csv(report: &RunReport) -> String {
    let mut records: Vec<Vec<String>> = report
        .strategies
        .iter()
        .map(|r| vec![r.seed.to_string(), r.strategy.clone(), num(r.omega), num(r.mean_return)])
        .collect();
    for (name, mean, ci) in strategy_summary(&report.strategies) {
        records.push(vec!["mean".into(), name.clone(), "NaN".into(), num(mean)]);
        records.push(vec!["ci95".into(), name, "NaN".into(), num(ci)]);
    }
    to_csv(&STRATEGY_HEADER, records)
}

/// Writes `report.csv`, `report.json` and, for the strategies protocol,
/// `strategies.csv` into `dir`.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let write = |name: &str, body: &str| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| io_err(&path, e))
    };
    write("report.csv", &report_csv(report))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))?;
    write("report.json", &json)?;
    if !report.strategies.is_empty() {
        write("strategies.csv", &strategies_csv(report))?;
    }
    Ok(())
}
