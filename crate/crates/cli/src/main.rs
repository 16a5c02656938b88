use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kmfl_cli::{describe_models, execute, CliError, Experiment};

/// Mean-field limit experiments for kernel-embedded multiagent systems.
#[derive(Parser)]
#[command(name = "kmfl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for the CSV and JSON reports.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate one trajectory and its mean-field counterpart.
    Simulate,
    /// One-step mean-field discrepancy over the M schedule.
    OneStep,
    /// Check the trajectory-level error bound.
    TrajectoryBound,
    /// Total-cost convergence over the M schedule.
    CostConvergence,
    /// Stage-cost convergence over the M schedule.
    StageCostConvergence,
    /// MMD of empirical samples to a reference measure.
    EmbeddingConvergence,
    /// Sampled Lipschitz estimates against declared constants.
    Lipschitz,
    /// Relaxed dynamic programming alpha search and certificate.
    Rdp,
    /// List the model zoo with declared constants.
    Models,
}

fn experiment(c: Command) -> Option<Experiment> {
    Some(match c {
        Command::Simulate => Experiment::Simulate,
        Command::OneStep => Experiment::OneStep,
        Command::TrajectoryBound => Experiment::TrajectoryBound,
        Command::CostConvergence => Experiment::CostConvergence,
        Command::StageCostConvergence => Experiment::StageCostConvergence,
        Command::EmbeddingConvergence => Experiment::EmbeddingConvergence,
        Command::Lipschitz => Experiment::Lipschitz,
        Command::Rdp => Experiment::Rdp,
        Command::Models => return None,
    })
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    let pool = match cli.jobs {
        Some(0) => return Err(CliError::Config("jobs: must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n),
        None => rayon::ThreadPoolBuilder::new(),
    }
    .build()
    .map_err(|e| CliError::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| match experiment(cli.command) {
        None => {
            print!("{}", describe_models()?);
            Ok(())
        }
        Some(exp) => {
            let path = cli
                .config
                .as_deref()
                .ok_or_else(|| CliError::Config(format!("{}: --config is required", exp.name())))?;
            let outcome = execute(exp, path, &cli.out, cli.seed)?;
            println!("{}", serde_json::to_string(&outcome.summary).expect("summaries serialize"));
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            eprintln!("{}", CliError::Config(e.kind().to_string()).record());
            return ExitCode::from(2);
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.status() as u8)
        }
    }
}
