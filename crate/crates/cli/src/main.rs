use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ergodec::{exit, run, CliError, Command, ExperimentConfig, RunOptions};

/// Ergodic decomposition experiments on concrete dynamical systems.
#[derive(Parser)]
#[command(name = "ergodec", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify points as converged, not converged or undecided.
    Classify(Args),
    /// Estimate the Choquet distribution of each experiment's measure.
    Decompose(Args),
    /// Run the configured barycenter, Borel and affine checks.
    Verify(Args),
    /// Classify the block-schedule witness and its shift.
    Witness(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(args: &Args) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Ok(s) = std::env::var("ERGODEC_SEED") {
        cfg.seed = s.trim().parse().map_err(|_| {
            CliError::Config(format!("ERGODEC_SEED={s:?} is not an unsigned integer"))
        })?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::Classify(a) => (Command::Classify, a),
        Cmd::Decompose(a) => (Command::Decompose, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Witness(a) => (Command::Witness, a),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("ergodec: cannot size thread pool: {e}");
            return ExitCode::from(exit::CONFIG_ERROR);
        }
    }
    let result = load(args).and_then(|cfg| {
        let out_dir = args
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("ergodec-out"));
        run(
            command,
            &cfg,
            &RunOptions {
                out_dir,
                svg: args.svg,
            },
        )
    });
    match result {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("ergodec {}: {e}", command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
