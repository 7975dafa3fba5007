mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use leafwise::scenario::{builtin_names, load_config};

use crate::commands::Run;
use crate::output::{Report, Sink};

#[derive(Parser)]
#[command(name = "leafwise", version, about = "Canonical connections, geodesics and Frobenius charts for (g, E) scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Involutivity residual on a grid over the domain.
    CheckInvolutive(Common),
    /// Christoffel, torsion and curvature tables at probe points.
    Connection(Common),
    /// Canonical connection against Schouten–Van Kampen, Vranceanu and Bott.
    Compare(Common),
    /// Reference geodesic trajectory.
    Geodesic(Common),
    /// Parallel transport of the adapted frame along the reference geodesic.
    Transport(Common),
    /// Jacobi field ODE against the variation oracle.
    Jacobi(Common),
    /// Leaf through the base point sampled by the E-directed exponential map.
    Leaf(Sampling),
    /// Frobenius chart around the base point.
    Chart(Sampling),
    /// Full invariant suite; exit status 0 iff every check passes.
    Verify(Common),
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Args, Clone)]
struct Common {
    /// Built-in scenario name or path to a TOML scenario file.
    #[arg(long)]
    scenario: String,
    /// Output directory.
    #[arg(long, default_value = "leafwise-out")]
    out: PathBuf,
    /// Overrides numerics.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides numerics.h.
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Args, Clone)]
struct Sampling {
    #[command(flatten)]
    common: Common,
    /// Sample even when E fails to be involutive at the base point.
    #[arg(long)]
    allow_non_involutive: bool,
}

fn execute(name: &str, common: &Common, allow_non_involutive: bool, f: fn(Run<'_>) -> Result<()>) -> Result<bool> {
    let mut cfg = load_config(&common.scenario).with_context(|| format!("loading scenario {}", common.scenario))?;
    if let Some(seed) = common.seed {
        cfg.numerics.seed = seed;
    }
    if let Some(h) = common.step {
        anyhow::ensure!(h > 0.0 && h.is_finite(), "--step must be positive, got {h}");
        cfg.numerics.h = h;
    }
    let sink = Sink::new(&common.out)?;
    let mut report = Report::new(&cfg.name, name, cfg.numerics);
    f(Run {
        cfg: &cfg,
        sink: &sink,
        report: &mut report,
        allow_non_involutive,
    })?;
    report.finish();
    let path = sink.report(&mut report)?;
    for line in &report.summary {
        println!("{line}");
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for c in report.checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {} = {:e} (threshold {:e}) at {}", c.id, c.value, c.threshold, c.probe);
    }
    println!("report: {}", path.display());
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::CheckInvolutive(c) => execute("check-involutive", c, false, commands::check_involutive),
        Command::Connection(c) => execute("connection", c, false, commands::connection),
        Command::Compare(c) => execute("compare", c, false, commands::compare),
        Command::Geodesic(c) => execute("geodesic", c, false, commands::geodesic),
        Command::Transport(c) => execute("transport", c, false, commands::transport),
        Command::Jacobi(c) => execute("jacobi", c, false, commands::jacobi),
        Command::Leaf(s) => execute("leaf", &s.common, s.allow_non_involutive, commands::leaf),
        Command::Chart(s) => execute("chart", &s.common, s.allow_non_involutive, commands::chart),
        Command::Verify(c) => execute("verify", c, false, commands::verify),
        Command::Scenarios => {
            for name in builtin_names() {
                println!("{name}");
            }
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
