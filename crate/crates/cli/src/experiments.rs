use std::fmt::Write as _;

use kmfl::kernels::{Kernel, StateBox};
use kmfl::meanfield::{
    cost_convergence, declared_constants, embedding_convergence, estimate_lipschitz, fmt_f64,
    mf_total_cost, mf_trajectory, one_step_convergence, stage_cost_convergence, trajectory_bound_check,
    ConvergenceReport, LipschitzTarget, TrajectoryBoundCheck,
};
use kmfl::measures::{mmd, AtomicMeasure};
use kmfl::rdp::{greedy_feedback, max_alpha_micro, rdp_check_meanfield, FeedbackMap, ValueCandidate};
use kmfl::sampling::{self, Tag};
use kmfl::systems::{ControlSequence, SystemModel};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Config, FeedbackSpec, ValueSpec};
use crate::error::CliError;
use crate::Experiment;

/// Report contents of one run. `failure` is set when a bound, certificate
/// or declared constant was violated; the reports are still complete.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub csv: String,
    pub summary: Value,
    pub failure: Option<String>,
}

impl Outcome {
    fn ok(csv: String, summary: Value) -> Self {
        Outcome {
            csv,
            summary,
            failure: None,
        }
    }
}

/// Runs the experiment named in a resolved config.
pub fn run(config: &Config) -> Result<Outcome, CliError> {
    let experiment = config
        .experiment
        .ok_or_else(|| CliError::Config("experiment: not resolved".into()))?;
    let k = config.kernel()?;
    let model = config.model()?;
    match experiment {
        Experiment::Simulate => simulate(config, &model, &k),
        Experiment::OneStep => {
            convergence(one_step_convergence(&model, &k, &config.ms, config.samples, config.seed)?)
        }
        Experiment::TrajectoryBound => trajectory_bound(config, &model, &k),
        Experiment::CostConvergence => convergence(cost_convergence(
            &model,
            &config.ms,
            config.horizon,
            config.samples,
            config.seed,
        )?),
        Experiment::StageCostConvergence => {
            convergence(stage_cost_convergence(&model, &config.ms, config.samples, config.seed)?)
        }
        Experiment::EmbeddingConvergence => {
            let reference = AtomicMeasure::grid(&config.state_box, config.reference_per_dim)?;
            convergence(embedding_convergence(&k, &reference, &config.ms, config.samples, config.seed)?)
        }
        Experiment::Lipschitz => lipschitz(config, &model, &k),
        Experiment::Rdp => rdp(config, &model, &k),
    }
}

fn convergence(report: ConvergenceReport) -> Result<Outcome, CliError> {
    let summary = serde_json::to_value(&report).expect("reports serialize");
    Ok(Outcome::ok(report.to_csv(), summary))
}

fn coord_header(dim: usize) -> String {
    (0..dim).map(|i| format!(",x{i}")).collect()
}

/// CSV `n,agent,x0,...` of the microscopic trajectory, with the MMD to the
/// mean-field trajectory started from the same empirical measure.
fn simulate(config: &Config, model: &SystemModel, k: &Kernel) -> Result<Outcome, CliError> {
    let x0 = match &config.initial_state {
        Some(x) => x.clone(),
        None => {
            let mut rng = sampling::stream(config.seed, Tag::Simulate, config.agents as u64, 0);
            sampling::uniform_state(&mut rng, model.state_box(), config.agents)
        }
    };
    let useq = match &config.controls {
        Some(c) => c.clone(),
        None => ControlSequence::zeros(model.controls().dim, config.horizon)?,
    };
    let micro = model.trajectory(&x0, &useq)?;
    let limit = mf_trajectory(model, &x0.empirical(), &useq)?;
    let gaps = micro
        .iter()
        .zip(&limit)
        .map(|(x, mu)| mmd(k, &x.empirical(), mu))
        .collect::<kmfl::Result<Vec<f64>>>()?;
    let mut csv = format!("n,agent{}\n", coord_header(x0.dim()));
    for (n, x) in micro.iter().enumerate() {
        for (i, p) in x.positions().enumerate() {
            let coords: String = p.iter().map(|v| format!(",{}", fmt_f64(*v))).collect();
            writeln!(csv, "{n},{i}{coords}").expect("writing to a String");
        }
    }
    let summary = json!({
        "agents": x0.agents(),
        "horizon": useq.horizon(),
        "total_cost": model.total_cost(&x0, &useq)?,
        "total_cost_meanfield": mf_total_cost(model, &x0.empirical(), &useq)?,
        "mmd_to_meanfield": gaps,
    });
    Ok(Outcome::ok(csv, summary))
}

/// CSV `M,instance,lhs,rhs,holds` over `samples` instances per `M`.
fn trajectory_bound(config: &Config, model: &SystemModel, k: &Kernel) -> Result<Outcome, CliError> {
    let lipschitz_f = match config.lipschitz_f {
        Some(l) => l,
        None => declared_constants(model, k)?.lipschitz_dynamics,
    };
    let mut csv = String::from("M,instance,lhs,rhs,holds\n");
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for &m in &config.ms {
        let checks = (0..config.samples as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = sampling::stream(config.seed, Tag::TrajectoryBound, m as u64, i);
                let x0 = sampling::sample_state(&mut rng, model.state_box(), m, i);
                let useq = sampling::sample_controls(&mut rng, &model.controls(), config.horizon);
                trajectory_bound_check(model, k, &x0, &useq, lipschitz_f)
            })
            .collect::<kmfl::Result<Vec<TrajectoryBoundCheck>>>()?;
        for (i, c) in checks.iter().enumerate() {
            violations += usize::from(!c.holds());
            worst = worst.max(c.lhs - c.rhs);
            writeln!(csv, "{m},{i},{},{},{}", fmt_f64(c.lhs), fmt_f64(c.rhs), c.holds())
                .expect("writing to a String");
        }
    }
    let failure = (violations > 0).then(|| {
        format!("trajectory bound violated in {violations} instances (worst lhs - rhs = {worst:e})")
    });
    Ok(Outcome {
        csv,
        summary: json!({
            "lipschitz_f": lipschitz_f,
            "tolerance": TrajectoryBoundCheck::TOL,
            "violations": violations,
            "max_lhs_minus_rhs": worst,
        }),
        failure,
    })
}

/// CSV `target,M,estimate,declared`; an estimate above its declared
/// constant is a failure.
fn lipschitz(config: &Config, model: &SystemModel, k: &Kernel) -> Result<Outcome, CliError> {
    let declared = declared_constants(model, k)?;
    let targets = [
        ("dynamics", LipschitzTarget::Dynamics, declared.lipschitz_dynamics),
        ("stage_cost", LipschitzTarget::StageCost, declared.lipschitz_cost),
    ];
    let mut csv = String::from("target,M,estimate,declared\n");
    let mut exceeded = Vec::new();
    for (name, target, bound) in targets {
        for &m in &config.ms {
            let est = estimate_lipschitz(target, model, k, m, config.samples, config.seed)?;
            if est > bound {
                exceeded.push(format!("{name} at M={m}: {est:e} > {bound:e}"));
            }
            writeln!(csv, "{name},{m},{},{}", fmt_f64(est), fmt_f64(bound)).expect("writing to a String");
        }
    }
    let failure = (!exceeded.is_empty())
        .then(|| format!("sampled estimate exceeds the declared constant: {}", exceeded.join("; ")));
    Ok(Outcome {
        csv,
        summary: json!({ "declared": declared, "exceeded": exceeded }),
        failure,
    })
}

/// CSV `M,alpha,vacuous,ratio_states,zero_cost_states` from the sampled
/// microscopic search, plus the mean-field certificate at the configured
/// alpha in the JSON summary.
fn rdp(config: &Config, model: &SystemModel, k: &Kernel) -> Result<Outcome, CliError> {
    let value = match config.rdp.value {
        ValueSpec::Variance { c } => ValueCandidate::variance(c, k)?,
        ValueSpec::KernelCohesion { c } => ValueCandidate::kernel_cohesion(c, k.clone())?,
    };
    let kappa = match config.rdp.feedback {
        FeedbackSpec::Zero => FeedbackMap::zero(model),
        FeedbackSpec::Greedy { grid_res } => greedy_feedback(model, &value, grid_res)?,
    };
    let mut csv = String::from("M,alpha,vacuous,ratio_states,zero_cost_states\n");
    let mut estimates = Vec::new();
    for &m in &config.ms {
        let est = max_alpha_micro(model, &value, &kappa, m, config.samples, config.seed)?;
        writeln!(
            csv,
            "{m},{},{},{},{}",
            fmt_f64(est.alpha),
            est.vacuous,
            est.ratio_states,
            est.zero_cost_states
        )
        .expect("writing to a String");
        estimates.push(est);
    }
    // group 0 is never a population size, so these streams are disjoint
    // from the microscopic ones
    let measures: Vec<AtomicMeasure> = (0..config.rdp.test_measures as u64)
        .map(|i| {
            let mut rng = sampling::stream(config.seed, Tag::Rdp, 0, i);
            sampling::random_measure(&mut rng, model.state_box(), config.rdp.test_atoms)
        })
        .collect();
    let mut cert = rdp_check_meanfield(model, &value, &kappa, &measures, config.rdp.alpha)?;
    cert.config = serde_json::to_value(config.rdp).expect("specs serialize");
    let failure = (!cert.pass).then(|| {
        format!(
            "mean-field certificate fails at alpha = {}: minimum residual {:e}",
            cert.alpha, cert.min_residual
        )
    });
    Ok(Outcome {
        csv,
        summary: json!({
            "micro": estimates,
            "meanfield": {
                "alpha": cert.alpha,
                "pass": cert.pass,
                "min_residual": cert.min_residual,
                "measures": measures.len(),
            },
            "value_lipschitz": value.lipschitz(),
        }),
        failure,
    })
}

/// Parameter documentation and declared constants for the model zoo, in a
/// fixed order. Constants refer to the MMD of a Gaussian kernel with
/// bandwidth 0.5 on the unit box.
pub fn describe_models() -> Result<String, CliError> {
    let unit1 = StateBox::unit(1)?;
    let unit2 = StateBox::unit(2)?;
    let zoo: [(SystemModel, &str); 3] = [
        (
            SystemModel::linear_consensus(unit1.clone(), 0.5, 0.1)?,
            "h in [0, 1]: step size; u_max >= 0: control bound. Drift toward the mean with \
             self-exclusion factor M/(M-1).",
        ),
        (
            SystemModel::bounded_confidence(unit1, 0.5, 0.3, 0.1)?,
            "h in [0, 1]: step size; radius > 0: confidence radius; u_max >= 0: control bound. \
             Smoothed Hegselmann-Krause.",
        ),
        (
            SystemModel::cucker_smale(unit2, 0.5, 0.5, 0.1)?,
            "h in [0, 1]: step size; beta >= 0: communication decay; u_max >= 0: control bound. \
             Box holds positions then velocities; controls act on velocities.",
        ),
    ];
    let mut out = String::new();
    for (model, params) in &zoo {
        let k = Kernel::gaussian(0.5, model.state_box().clone())?;
        let c = declared_constants(model, &k)?;
        writeln!(out, "{}", model.describe()).expect("writing to a String");
        writeln!(out, "  params: {params}").expect("writing to a String");
        writeln!(
            out,
            "  declared (gaussian bandwidth 0.5, unit box of dim {}): L_f = {:.6} ({:?}), L_l = {:.6} ({:?}), B_l = {:.6}",
            model.state_box().dim(),
            c.lipschitz_dynamics,
            c.dynamics_source,
            c.lipschitz_cost,
            c.cost_source,
            c.cost_bound
        )
        .expect("writing to a String");
    }
    writeln!(
        out,
        "costs: variance(lambda_u), sample_variance(lambda_u), kernel_cohesion(lambda_u)"
    )
    .expect("writing to a String");
    Ok(out)
}
