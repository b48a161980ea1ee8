use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jhl::{run, CliError, Command, RunConfig};

/// Numerical laboratory for the discrete Jacobi heat semigroup.
#[derive(Parser)]
#[command(name = "jhl", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Kernel and time-derivative matrices with defect checks.
    Kernel(RunArgs),
    /// Per-index variation, oscillation, jump and S_* tables for one signal.
    Operators(RunArgs),
    /// Kernel estimate checks and theorem sweeps with verdicts.
    Verify(RunArgs),
    /// Weighted norm sweeps of the variational operators.
    Norms(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Probe seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to the config, then JHL_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
}

fn workers(args: &RunArgs, cfg: &RunConfig) -> Result<Option<usize>, CliError> {
    if let Some(w) = args.workers.or(cfg.workers) {
        return Ok(Some(w));
    }
    match std::env::var("JHL_WORKERS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|w| *w > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("JHL_WORKERS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn execute(cmd: Command, args: RunArgs) -> Result<jhl::Outcome, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.workers == Some(0) {
        return Err(CliError::Config("--workers must be positive".into()));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers(&args, &cfg)? {
        cfg.workers = Some(w);
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| CliError::Config(format!("cannot start workers: {e}")))?;
    pool.install(|| run(cmd, &cfg))?.into_result()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Kernel(a) => (Command::Kernel, a),
        Cmd::Operators(a) => (Command::Operators, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Norms(a) => (Command::Norms, a),
    };
    match execute(cmd, args) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            println!("wrote {} files", outcome.files.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
