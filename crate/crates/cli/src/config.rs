//! Experiment configuration: one JSON document per invocation.

use std::path::Path;

use kmfl::kernels::{Kernel, KernelFamily, StateBox};
use kmfl::systems::{AgentState, ControlSequence, StageCost, SystemModel};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::Experiment;

/// Full experiment configuration. Unknown keys are rejected and every
/// omitted field takes its documented default, so the serialized form of a
/// loaded config is the complete resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// When present, must name the subcommand being run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "box")]
    pub state_box: StateBox,
    pub kernel: KernelFamily,
    pub model: ModelSpec,
    #[serde(default)]
    pub cost: CostSpec,
    /// Population sizes `M`.
    #[serde(default = "default_ms")]
    pub ms: Vec<usize>,
    /// Samples per `M`: states, instances, pairs or seeds depending on the
    /// experiment.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Horizon `N`.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Population size for `simulate` when no initial state is given.
    #[serde(default = "default_agents")]
    pub agents: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<AgentState>,
    /// Controls for `simulate`; zeros over `horizon` steps when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<ControlSequence>,
    /// Grid points per axis of the uniform reference measure used by
    /// `embedding-convergence`.
    #[serde(default = "default_reference_per_dim")]
    pub reference_per_dim: usize,
    /// Overrides the declared `L_f` in `trajectory-bound`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_f: Option<f64>,
    #[serde(default)]
    pub rdp: RdpSpec,
}

fn default_ms() -> Vec<usize> {
    vec![25, 50, 100, 200, 400, 800]
}

fn default_samples() -> usize {
    200
}

fn default_horizon() -> usize {
    5
}

fn default_agents() -> usize {
    100
}

fn default_reference_per_dim() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    LinearConsensus { h: f64, u_max: f64 },
    BoundedConfidence { h: f64, radius: f64, u_max: f64 },
    #[serde(rename = "cucker_smale_discrete")]
    CuckerSmale { h: f64, beta: f64, u_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    Variance { lambda_u: f64 },
    SampleVariance { lambda_u: f64 },
    /// Cohesion under the configured kernel.
    KernelCohesion { lambda_u: f64 },
}

impl Default for CostSpec {
    fn default() -> Self {
        CostSpec::Variance { lambda_u: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValueSpec {
    Variance { c: f64 },
    KernelCohesion { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeedbackSpec {
    Zero,
    Greedy { grid_res: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdpSpec {
    #[serde(default = "default_value")]
    pub value: ValueSpec,
    #[serde(default = "default_feedback")]
    pub feedback: FeedbackSpec,
    /// The `alpha` checked on the mean-field test measures.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_test_measures")]
    pub test_measures: usize,
    #[serde(default = "default_test_atoms")]
    pub test_atoms: usize,
}

fn default_value() -> ValueSpec {
    ValueSpec::Variance { c: 1.0 }
}

fn default_feedback() -> FeedbackSpec {
    FeedbackSpec::Zero
}

fn default_alpha() -> f64 {
    0.5
}

fn default_test_measures() -> usize {
    100
}

fn default_test_atoms() -> usize {
    2
}

impl Default for RdpSpec {
    fn default() -> Self {
        RdpSpec {
            value: default_value(),
            feedback: default_feedback(),
            alpha: default_alpha(),
            test_measures: default_test_measures(),
            test_atoms: default_test_atoms(),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::from_json(&text)
    }

    /// Applies the command line and fills in the experiment name, then
    /// validates everything that does not require computation.
    pub fn resolve(mut self, experiment: Experiment, seed: Option<u64>) -> Result<Self, CliError> {
        if let Some(named) = self.experiment {
            if named != experiment {
                return Err(CliError::Config(format!(
                    "experiment: config is for `{}` but `{}` was requested",
                    named.name(),
                    experiment.name()
                )));
            }
        }
        self.experiment = Some(experiment);
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(c) = &self.controls {
            self.horizon = c.horizon();
        }
        if let Some(x) = &self.initial_state {
            self.agents = x.agents();
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        let fail = |field: &str, why: &str| Err(CliError::Config(format!("{field}: {why}")));
        if self.ms.is_empty() || self.ms.contains(&0) {
            return fail("ms", "need at least one population size, all positive");
        }
        if self.ms.windows(2).any(|w| w[0] >= w[1]) {
            return fail("ms", "population sizes must be strictly increasing");
        }
        if self.samples == 0 {
            return fail("samples", "must be at least 1");
        }
        if self.horizon == 0 {
            return fail("horizon", "must be at least 1");
        }
        if self.agents == 0 {
            return fail("agents", "must be at least 1");
        }
        if self.reference_per_dim == 0 {
            return fail("reference_per_dim", "must be at least 1");
        }
        if let Some(l) = self.lipschitz_f {
            if !(l >= 0.0 && l.is_finite()) {
                return fail("lipschitz_f", "must be nonnegative and finite");
            }
        }
        if !(self.rdp.alpha > 0.0 && self.rdp.alpha <= 1.0) {
            return fail("rdp.alpha", "must lie in (0, 1]");
        }
        if self.rdp.test_measures == 0 || self.rdp.test_atoms == 0 {
            return fail("rdp", "test_measures and test_atoms must be at least 1");
        }
        // building the objects runs the library's own parameter checks
        self.kernel()?;
        self.model()?;
        if let Some(x) = &self.initial_state {
            x.check_in(&self.state_box)
                .map_err(|e| CliError::Config(format!("initial_state: {e}")))?;
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<Kernel, CliError> {
        Kernel::new(self.kernel, self.state_box.clone()).map_err(|e| CliError::Config(format!("kernel: {e}")))
    }

    pub fn model(&self) -> Result<SystemModel, CliError> {
        let b = self.state_box.clone();
        let model = match self.model {
            ModelSpec::LinearConsensus { h, u_max } => SystemModel::linear_consensus(b, h, u_max),
            ModelSpec::BoundedConfidence { h, radius, u_max } => {
                SystemModel::bounded_confidence(b, h, radius, u_max)
            }
            ModelSpec::CuckerSmale { h, beta, u_max } => SystemModel::cucker_smale(b, h, beta, u_max),
        }
        .map_err(|e| CliError::Config(format!("model: {e}")))?;
        let cost = match self.cost {
            CostSpec::Variance { lambda_u } => StageCost::variance(lambda_u),
            CostSpec::SampleVariance { lambda_u } => StageCost::sample_variance(lambda_u),
            CostSpec::KernelCohesion { lambda_u } => StageCost::kernel_cohesion(lambda_u, self.kernel()?),
        };
        model
            .with_cost(cost)
            .map_err(|e| CliError::Config(format!("cost: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "box": {"lower": [0.0], "upper": [1.0]},
        "kernel": {"family": "gaussian", "bandwidth": 0.5},
        "model": {"name": "linear_consensus", "h": 0.5, "u_max": 0.1}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = Config::from_json(MINIMAL).unwrap();
        assert_eq!(c.ms, default_ms());
        assert_eq!(c.cost, CostSpec::Variance { lambda_u: 0.1 });
        let r = c.resolve(Experiment::OneStep, Some(9)).unwrap();
        assert_eq!(r.seed, 9);
        assert_eq!(r.experiment, Some(Experiment::OneStep));
        // the resolved form reloads to itself
        let again = Config::from_json(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replacen('{', r#"{"sampels": 3,"#, 1);
        assert!(matches!(Config::from_json(&bad), Err(CliError::Config(_))));
        let bad = MINIMAL.replace(r#""h": 0.5"#, r#""h": 0.5, "gain": 2"#);
        assert!(Config::from_json(&bad).is_err());
    }

    #[test]
    fn mismatched_experiment() {
        let text = MINIMAL.replacen('{', r#"{"experiment": "rdp","#, 1);
        let c = Config::from_json(&text).unwrap();
        assert!(c.clone().resolve(Experiment::Rdp, None).is_ok());
        assert!(c.resolve(Experiment::OneStep, None).is_err());
    }

    #[test]
    fn negative_bandwidth_names_the_field() {
        let text = MINIMAL.replace("0.5}", "-0.5}");
        let err = Config::from_json(&text).unwrap().resolve(Experiment::OneStep, None).unwrap_err();
        assert!(err.to_string().contains("bandwidth"), "{err}");
        assert_eq!(err.status(), 2);
    }
}
