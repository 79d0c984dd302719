//! SVG line plots of a report metric against the episode count.
//!
//! Reads the aggregate `mean`/`ci95` rows of one or more concatenated report
//! files and draws one polyline per `(env, rule, conf)` series with a shaded
//! confidence band. The x axis is logarithmic.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// CSV column for a metric name.
pub fn metric_column(metric: &str) -> Result<&'static str> {
    match metric {
        "alpha" => Ok("alpha_hat"),
        "beta" => Ok("beta_hat"),
        "match" => Ok("exact_match"),
        "return" => Ok("return"),
        "" => Err(Error::InvalidArgument("empty metric name".into())),
        m => Err(Error::InvalidArgument(format!("unknown metric `{m}` (alpha, beta, match, return)"))),
    }
}

#[derive(Debug, Default, Clone)]
struct Point {
    mean: Option<f64>,
    ci: Option<f64>,
}

type Series = BTreeMap<String, BTreeMap<usize, Point>>;

fn parse(csv_text: &str, column: &str) -> Result<Series> {
    let bad = |m: String| Error::InvalidArgument(m);
    let mut reader = csv::ReaderBuilder::new().from_reader(csv_text.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let idx = |name: &str| header.iter().position(|h| h == name);
    let value = idx(column).ok_or_else(|| bad(format!("report has no `{column}` column")))?;
    let n = idx("n").ok_or_else(|| bad("report has no `n` column".into()))?;
    let seed = idx("seed").ok_or_else(|| bad("report has no `seed` column".into()))?;
    let key: Vec<usize> = ["env", "rule", "conf"].iter().filter_map(|k| idx(k)).collect();
    let mut series = Series::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        // repeated headers from concatenated files
        if rec.get(n) == Some("n") {
            continue;
        }
        let stat = rec.get(seed).unwrap_or("");
        if stat != "mean" && stat != "ci95" {
            continue;
        }
        let name = key.iter().map(|&k| rec.get(k).unwrap_or("")).collect::<Vec<_>>().join(" ");
        let name = name.replace(" true", " conf").replace(" false", " no-conf");
        let x: usize = rec.get(n).unwrap_or("").parse().map_err(|_| bad(format!("bad n in {rec:?}")))?;
        let y: f64 = rec.get(value).unwrap_or("").parse().map_err(|_| bad(format!("bad value in {rec:?}")))?;
        let p = series.entry(name).or_default().entry(x).or_default();
        if stat == "mean" {
            p.mean = Some(y);
        } else {
            p.ci = Some(y);
        }
    }
    Ok(series)
}

/// Renders `metric` of a report CSV as an SVG document.
pub fn plot_svg(csv_text: &str, metric: &str) -> Result<String> {
    let column = metric_column(metric)?;
    let series = parse(csv_text, column)?;
    if series.is_empty() {
        return Err(Error::InvalidArgument("report has no aggregate rows".into()));
    }
    let mut xs: Vec<usize> = series.values().flat_map(|s| s.keys().copied()).collect();
    xs.sort_unstable();
    xs.dedup();
    if xs.len() < 2 || series.values().any(|s| s.len() < 2) {
        return Err(Error::InvalidArgument("plotting needs at least two sweep points per series".into()));
    }
    if xs[0] == 0 {
        return Err(Error::InvalidArgument("episode counts must be positive".into()));
    }
    let (lx0, lx1) = ((xs[0] as f64).ln(), (*xs.last().unwrap() as f64).ln());
    let band = |p: &Point| {
        let m = p.mean.unwrap_or(f64::NAN);
        let c = p.ci.filter(|c| c.is_finite()).unwrap_or(0.0);
        (m - c, m + c)
    };
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in series.values().flat_map(|s| s.values()) {
        let (lo, hi) = band(p);
        if lo.is_finite() && hi.is_finite() {
            y0 = y0.min(lo);
            y1 = y1.max(hi);
        }
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if y1 - y0 < 1e-9 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let sx = |x: usize| MARGIN + ((x as f64).ln() - lx0) / (lx1 - lx0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (bl, br, bt, bb) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(svg, r#"<line x1="{bl}" y1="{bb}" x2="{br}" y2="{bb}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{bl}" y1="{bt}" x2="{bl}" y2="{bb}" stroke="black"/>"#);
    for &x in &xs {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{x}</text>"#,
            sx(x),
            bb + 16.0
        );
    }
    for (y, anchor) in [(y0, bb), (y1, bt)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{y:.3}</text>"#,
            bl - 4.0,
            anchor + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">episodes</text>"#,
        WIDTH / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(svg, r#"<text x="12" y="{:.2}" font-size="12">{column}</text>"#, MARGIN - 20.0);

    for (k, (name, pts)) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let upper: Vec<String> = pts.iter().map(|(&x, p)| format!("{:.2},{:.2}", sx(x), sy(band(p).1))).collect();
        let lower: Vec<String> = pts.iter().rev().map(|(&x, p)| format!("{:.2},{:.2}", sx(x), sy(band(p).0))).collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{} {}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let d: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(i, (&x, p))| {
                format!("{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, sx(x), sy(p.mean.unwrap_or(f64::NAN)))
            })
            .collect();
        let _ = writeln!(svg, r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, d.join(" "));
        let ly = MARGIN + 14.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="11" fill="{colour}">{}</text>"#,
            WIDTH - MARGIN - 150.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "env,rule,conf,n,seed,alpha_hat,beta_hat,exact_match,wallclock_s\n\
        g,simplified,false,10,0,0.1,0.2,0,1\n\
        g,simplified,false,10,mean,0.1,0.2,0,1\n\
        g,simplified,false,10,ci95,0.01,0.02,0,0\n\
        g,simplified,false,100,mean,0.05,0.1,1,1\n\
        g,simplified,false,100,ci95,0.01,0.02,0,0\n";

    #[test]
    fn one_path_per_series() {
        let svg = plot_svg(TWO, "beta").unwrap();
        assert_eq!(svg.matches("<path").count(), 1);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn errors() {
        assert!(plot_svg(TWO, "").is_err());
        assert!(plot_svg(TWO, "gamma").is_err());
        assert!(plot_svg(TWO, "return").is_err());
        let single: String = TWO.lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(plot_svg(&single, "alpha").is_err());
    }
}
