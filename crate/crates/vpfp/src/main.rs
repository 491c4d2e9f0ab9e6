use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vpfp::config::{parse_config_with, ExperimentKind};
use vpfp::experiments::registry::execute;
use vpfp::VpfpError;

#[derive(Parser)]
#[command(name = "vpfp", version, about = "Vlasov-Poisson-Fokker-Planck spectral simulator and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nonlinear run with moment series, step log and snapshots.
    Simulate(Opts),
    /// Oracle triangle, enhanced-dissipation scan and zero-mode heat check.
    Linear(Opts),
    /// Penrose margins.
    Penrose(Opts),
    /// Reduced and full-simulator echo.
    Echo(Opts),
    /// Bisection threshold scan.
    Threshold(Opts),
    /// Collisional run against its collisionless twin.
    Limit(Opts),
    /// Sampling certification suites.
    Check(Opts),
}

#[derive(Args)]
struct Opts {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set grid.k_max=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Command {
    fn split(self) -> (ExperimentKind, Opts) {
        match self {
            Command::Simulate(o) => (ExperimentKind::Simulate, o),
            Command::Linear(o) => (ExperimentKind::Linear, o),
            Command::Penrose(o) => (ExperimentKind::Penrose, o),
            Command::Echo(o) => (ExperimentKind::Echo, o),
            Command::Threshold(o) => (ExperimentKind::Threshold, o),
            Command::Limit(o) => (ExperimentKind::Limit, o),
            Command::Check(o) => (ExperimentKind::Check, o),
        }
    }
}

fn run(kind: ExperimentKind, opts: Opts) -> Result<i32, VpfpError> {
    let text = match &opts.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| VpfpError::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut sets = opts.sets;
    sets.push(format!("experiment=\"{kind}\""));
    let cfg = parse_config_with(&text, &sets)?;
    let outcome = execute(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default());
    eprintln!("{kind}: {:?}, artifacts in {}", outcome.status, cfg.output_dir.display());
    Ok(outcome.status.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("VPFP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("VPFP_THREADS ignored: {e}");
        }
    }
    let (kind, opts) = cli.command.split();
    let code = match run(kind, opts) {
        Ok(c) => c,
        Err(VpfpError::Config(msg)) => {
            eprintln!("configuration error:\n{msg}");
            2
        }
        Err(e) => {
            eprintln!("{e}");
            1
        }
    };
    ExitCode::from(code as u8)
}
