use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use polid::harness::{plot_svg, run_experiment, write_report, ExperimentConfig};
use polid::Error;

#[derive(Parser)]
#[command(name = "polid", version, about = "Policy space identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Half-open seed range such as `0..25`.
        #[arg(long, value_parser = parse_range)]
        seeds: Option<(u64, u64)>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Render a metric of a report CSV as SVG next to the input.
    Plot {
        report: PathBuf,
        #[arg(long)]
        metric: String,
        /// Output file; defaults to `<report>.<metric>.svg`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or("expected S0..S1")?;
    let a: u64 = a.parse().map_err(|e| format!("{a}: {e}"))?;
    let b: u64 = b.parse().map_err(|e| format!("{b}: {e}"))?;
    if b <= a {
        return Err("empty seed range".into());
    }
    Ok((a, b))
}

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config, out, seeds, jobs } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(|e| Failure::Config(e.into()))?;
            if let Some((a, b)) = seeds {
                cfg.seed_offset = a;
                cfg.seeds = Some((b - a) as usize);
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let report = run_experiment(&cfg, jobs).map_err(|e| match e {
                Error::Config(_) => Failure::Config(e.into()),
                e => Failure::Run(e.into()),
            })?;
            write_report(&report, &cfg.output_dir)
                .with_context(|| format!("writing {}", cfg.output_dir.display()))
                .map_err(Failure::Run)?;
            let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
            eprintln!(
                "{} rows written to {} ({failed} failed)",
                report.rows.len(),
                cfg.output_dir.display()
            );
            Ok(())
        }
        Command::Plot { report, metric, out } => {
            let text = std::fs::read_to_string(&report)
                .with_context(|| format!("reading {}", report.display()))
                .map_err(Failure::Config)?;
            let svg = plot_svg(&text, &metric).map_err(|e| Failure::Config(e.into()))?;
            let out = out.unwrap_or_else(|| report.with_extension(format!("{metric}.svg")));
            std::fs::write(&out, svg)
                .with_context(|| format!("writing {}", out.display()))
                .map_err(Failure::Run)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("run failed: {e:#}");
            ExitCode::from(3)
        }
    }
}
