use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, ValueEnum};

use fracdiff::cli::{exit_code, run};
use fracdiff::config::{apply_override, load_raw, ExperimentConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Kernel,
    Laplacian,
    Linear,
    Solve,
    Extension,
    Analyze,
    Acceptance,
}

#[derive(Debug, Parser)]
#[command(name = "fracdiff", version, about = "Nonlinear fractional diffusion experiments")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Sectioned key = value configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override as section.key=value; repeatable, applied last.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Kernel profile cache directory.
    #[arg(long)]
    cache: Option<PathBuf>,
}

fn command_name(c: Command) -> &'static str {
    match c {
        Command::Kernel => "kernel",
        Command::Laplacian => "laplacian",
        Command::Linear => "linear",
        Command::Solve => "solve",
        Command::Extension => "extension",
        Command::Analyze => "analyze",
        Command::Acceptance => "acceptance",
    }
}

fn resolve(cli: &Cli) -> fracdiff::error::Result<ExperimentConfig> {
    let o = &cli.opts;
    let mut raw = load_raw(o.config.as_deref())?;
    let mut sets = vec![format!("run.subcommand={}", command_name(cli.command))];
    let mut flag = |key: &str, v: Option<String>| {
        if let Some(v) = v {
            sets.push(format!("{key}={v}"));
        }
    };
    flag("params.sigma", o.sigma.map(|v| v.to_string()));
    flag("params.dim", o.dim.map(|v| v.to_string()));
    flag("grid.n", o.n.map(|v| v.to_string()));
    flag("grid.length", o.length.map(|v| v.to_string()));
    flag("run.seed", o.seed.map(|v| v.to_string()));
    flag("run.output", o.out.as_ref().map(|v| v.display().to_string()));
    flag("run.cache", o.cache.as_ref().map(|v| v.display().to_string()));
    sets.extend(o.sets.iter().cloned());
    for s in &sets {
        apply_override(&mut raw, s)?;
    }
    ExperimentConfig::from_raw(raw)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|cfg| run(&cfg));
    match &result {
        Ok(m) => {
            for c in &m.checks {
                let tag = if c.pass { "pass" } else if c.hard { "FAIL" } else { "soft-fail" };
                println!("{tag:>9}  {:<34} {:.3e} (threshold {:.3e})", c.name, c.value, c.threshold);
            }
            for n in &m.notes {
                println!("note: {n}");
            }
            if let Some(e) = &m.error {
                eprintln!("error: {e}");
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
