//! Configuration-driven experiment runner behind the `kmfl` binary.
//!
//! Each experiment reads one JSON [`Config`], writes `<experiment>.csv` and
//! `<experiment>.json` into the output directory, and reports failures
//! through [`CliError`], whose [`CliError::status`] is the process exit
//! status.

pub mod config;
pub mod error;
mod experiments;

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::Config;
pub use error::CliError;
pub use experiments::{describe_models, run, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    OneStep,
    TrajectoryBound,
    CostConvergence,
    StageCostConvergence,
    EmbeddingConvergence,
    Lipschitz,
    Rdp,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::OneStep => "one-step",
            Experiment::TrajectoryBound => "trajectory-bound",
            Experiment::CostConvergence => "cost-convergence",
            Experiment::StageCostConvergence => "stage-cost-convergence",
            Experiment::EmbeddingConvergence => "embedding-convergence",
            Experiment::Lipschitz => "lipschitz",
            Experiment::Rdp => "rdp",
        }
    }
}

/// Writes the CSV and the JSON report (summary plus the resolved config).
pub fn write_reports(out: &Path, config: &Config, outcome: &Outcome) -> Result<(), CliError> {
    let experiment = config.experiment.expect("resolved configs name their experiment");
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", out.display()));
    std::fs::create_dir_all(out).map_err(io)?;
    std::fs::write(out.join(format!("{}.csv", experiment.name())), &outcome.csv).map_err(io)?;
    let report = json!({
        "experiment": experiment.name(),
        "status": if outcome.failure.is_some() { "fail" } else { "pass" },
        "summary": outcome.summary,
        "config": config,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("reports serialize");
    text.push('\n');
    std::fs::write(out.join(format!("{}.json", experiment.name())), text).map_err(io)
}

/// Loads, resolves and runs one experiment, writing its reports. A failed
/// check still writes both reports before returning the failure.
pub fn execute(
    experiment: Experiment,
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
) -> Result<Outcome, CliError> {
    let config = Config::load(config_path)?.resolve(experiment, seed)?;
    let outcome = run(&config)?;
    write_reports(out, &config, &outcome)?;
    match &outcome.failure {
        Some(why) => Err(CliError::Failure(why.clone())),
        None => Ok(outcome),
    }
}
