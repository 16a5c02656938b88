//! Relaxed dynamic programming certificates.
//!
//! Given a value candidate `V` and a feedback `kappa`, the relaxed dynamic
//! programming inequality
//!
//! ```text
//! V(x) >= V(f(x, kappa(x))) + alpha * l(x, kappa(x))
//! ```
//!
//! certifies that the closed loop recovers at least the fraction `alpha` of
//! the optimal cost decrease. This module evaluates the inequality at finite
//! `M`, estimates the largest admissible `alpha` from samples, and checks the
//! inequality for the mean-field limit on a list of measures.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelFamily};
use crate::meanfield::{estimate_lipschitz, LipschitzTarget};
use crate::measures::{kme_norm_sq, weighted_mean, AtomicMeasure};
use crate::sampling::{self, Tag};
use crate::systems::{AgentState, ControlInput, SystemModel};

/// Residuals at or above `-CERT_TOL` pass.
pub const CERT_TOL: f64 = 1e-9;

/// Stage costs at or below this count as zero in the alpha search.
pub const ZERO_COST_TOL: f64 = 1e-12;

type MicroScalar = Arc<dyn Fn(&AgentState) -> Result<f64> + Send + Sync>;
type MeasureScalar = Arc<dyn Fn(&AtomicMeasure) -> Result<f64> + Send + Sync>;
type MicroControl = Arc<dyn Fn(&AgentState) -> Result<ControlInput> + Send + Sync>;
type MeasureControl = Arc<dyn Fn(&AtomicMeasure) -> Result<ControlInput> + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub enum ValueKind {
    /// `c * Var(mu)`.
    Variance { c: f64 },
    /// `c * (k_max - |Pi(mu)|^2)`, nonnegative since `|Pi(mu)|^2 <= k_max`.
    KernelCohesion { c: f64, kernel: Kernel },
    Custom,
}

/// Value function candidate with matching microscopic and mean-field
/// evaluators.
#[derive(Clone)]
pub struct ValueCandidate {
    kind: ValueKind,
    micro: MicroScalar,
    meanfield: MeasureScalar,
    lipschitz: Option<f64>,
}

impl fmt::Debug for ValueCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ValueCandidate")
            .field("kind", &self.kind)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

fn canonical_variance(mu: &AtomicMeasure) -> f64 {
    let d = mu.dim();
    let (sorted, w) = mu.canonical();
    let mean = weighted_mean(d, &sorted, &w);
    sorted
        .chunks_exact(d)
        .zip(&w)
        .map(|(a, wi)| wi * a.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
        .sum()
}

fn positive_c(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter {
            name: "c",
            reason: format!("must be positive, got {c}"),
        })
    }
}

impl ValueCandidate {
    /// `V(mu) = c Var(mu)`. The declared constant is analytic for an
    /// augmented metric kernel and unknown otherwise.
    pub fn variance(c: f64, metric: &Kernel) -> Result<Self> {
        positive_c(c)?;
        let lipschitz = match metric.family() {
            KernelFamily::Augmented { lambda_poly, .. } if lambda_poly > 0.0 => {
                let d = metric.dim() as f64;
                let r = metric.domain().max_norm();
                Some(c * ((d / lambda_poly).sqrt() + 2.0 * r / (2.0 * lambda_poly).sqrt()))
            }
            _ => None,
        };
        let mf: MeasureScalar = Arc::new(move |mu| Ok(c * canonical_variance(mu)));
        let mf2 = mf.clone();
        Ok(ValueCandidate {
            kind: ValueKind::Variance { c },
            micro: Arc::new(move |x| mf2(&x.empirical())),
            meanfield: mf,
            lipschitz,
        })
    }

    /// `V(mu) = c (k_max - |Pi_k(mu)|^2)`, `2 c sqrt(k_max)`-Lipschitz in the
    /// MMD of `kernel`.
    pub fn kernel_cohesion(c: f64, kernel: Kernel) -> Result<Self> {
        positive_c(c)?;
        let k2 = kernel.clone();
        let bound = kernel.bound();
        let mf: MeasureScalar = Arc::new(move |mu| {
            let (sorted, w) = mu.canonical();
            let canon = AtomicMeasure::new(mu.dim(), sorted, w)?;
            Ok((c * (bound - kme_norm_sq(&k2, &canon)?)).max(0.0))
        });
        let mf2 = mf.clone();
        Ok(ValueCandidate {
            lipschitz: Some(2.0 * c * bound.sqrt()),
            kind: ValueKind::KernelCohesion { c, kernel },
            micro: Arc::new(move |x| mf2(&x.empirical())),
            meanfield: mf,
        })
    }

    pub fn custom<F, G>(micro: F, meanfield: G, lipschitz: Option<f64>) -> Self
    where
        F: Fn(&AgentState) -> Result<f64> + Send + Sync + 'static,
        G: Fn(&AtomicMeasure) -> Result<f64> + Send + Sync + 'static,
    {
        ValueCandidate {
            kind: ValueKind::Custom,
            micro: Arc::new(micro),
            meanfield: Arc::new(meanfield),
            lipschitz,
        }
    }

    pub fn kind(&self) -> &ValueKind {
        &self.kind
    }

    /// Declared MMD-Lipschitz constant, if known.
    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn micro(&self, x: &AgentState) -> Result<f64> {
        (self.micro)(x)
    }

    pub fn meanfield(&self, mu: &AtomicMeasure) -> Result<f64> {
        (self.meanfield)(mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackKind {
    GreedyGrid { resolution: usize },
    Zero,
    Custom,
}

/// Feedback with microscopic and mean-field forms.
#[derive(Clone)]
pub struct FeedbackMap {
    kind: FeedbackKind,
    micro: MicroControl,
    meanfield: MeasureControl,
    lipschitz: Option<f64>,
}

impl fmt::Debug for FeedbackMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeedbackMap")
            .field("kind", &self.kind)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl FeedbackMap {
    /// `kappa = 0`, trivially 0-Lipschitz.
    pub fn zero(model: &SystemModel) -> Self {
        let p = model.controls().dim;
        FeedbackMap {
            kind: FeedbackKind::Zero,
            micro: Arc::new(move |_| Ok(ControlInput::zeros(p))),
            meanfield: Arc::new(move |_| Ok(ControlInput::zeros(p))),
            lipschitz: Some(0.0),
        }
    }

    pub fn custom<F, G>(micro: F, meanfield: G, lipschitz: Option<f64>) -> Self
    where
        F: Fn(&AgentState) -> Result<ControlInput> + Send + Sync + 'static,
        G: Fn(&AtomicMeasure) -> Result<ControlInput> + Send + Sync + 'static,
    {
        FeedbackMap {
            kind: FeedbackKind::Custom,
            micro: Arc::new(micro),
            meanfield: Arc::new(meanfield),
            lipschitz,
        }
    }

    pub fn kind(&self) -> FeedbackKind {
        self.kind
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn micro(&self, x: &AgentState) -> Result<ControlInput> {
        (self.micro)(x)
    }

    pub fn meanfield(&self, mu: &AtomicMeasure) -> Result<ControlInput> {
        (self.meanfield)(mu)
    }
}

/// Index of the smallest value; the first one wins ties.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// One-step lookahead feedback over the control grid,
/// `kappa(x) = argmin_u l(x, u) + V(f(x, u))`, with ties going to the
/// lexicographically smallest grid index. The mean-field map uses the
/// mean-field dynamics, cost and value.
pub fn greedy_feedback(model: &SystemModel, value: &ValueCandidate, grid_res: usize) -> Result<FeedbackMap> {
    if grid_res < 2 {
        return Err(Error::Parameter {
            name: "grid_res",
            reason: "need at least 2 points per control axis".into(),
        });
    }
    let grid = Arc::new(model.controls().grid(grid_res));
    let (m1, v1, g1) = (model.clone(), value.clone(), grid.clone());
    let micro: MicroControl = Arc::new(move |x| {
        let scores = g1
            .iter()
            .map(|u| Ok(m1.stage_cost(x, u)? + v1.micro(&m1.step(x, u)?)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(g1[argmin(&scores)].clone())
    });
    let (m2, v2, g2) = (model.clone(), value.clone(), grid);
    let meanfield: MeasureControl = Arc::new(move |mu| {
        let scores = g2
            .iter()
            .map(|u| Ok(m2.stage_cost_meanfield(mu, u)? + v2.meanfield(&m2.step_meanfield(mu, u)?)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(g2[argmin(&scores)].clone())
    });
    Ok(FeedbackMap {
        kind: FeedbackKind::GreedyGrid { resolution: grid_res },
        micro,
        meanfield,
        lipschitz: None,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter {
            name: "alpha",
            reason: format!("must lie in (0, 1], got {alpha}"),
        })
    }
}

/// Value decrease and stage cost along the closed loop at `x`.
fn micro_terms(
    model: &SystemModel,
    value: &ValueCandidate,
    kappa: &FeedbackMap,
    x: &AgentState,
) -> Result<(f64, f64)> {
    let u = kappa.micro(x)?;
    let decrease = value.micro(x)? - value.micro(&model.step(x, &u)?)?;
    Ok((decrease, model.stage_cost(x, &u)?))
}

fn meanfield_terms(
    model: &SystemModel,
    value: &ValueCandidate,
    kappa: &FeedbackMap,
    mu: &AtomicMeasure,
) -> Result<(f64, f64)> {
    let u = kappa.meanfield(mu)?;
    let decrease = value.meanfield(mu)? - value.meanfield(&model.step_meanfield(mu, &u)?)?;
    Ok((decrease, model.stage_cost_meanfield(mu, &u)?))
}

/// `V_M(x) - V_M(f_M(x, kappa_M(x))) - alpha l_M(x, kappa_M(x))`.
pub fn rdp_residual_micro(
    model: &SystemModel,
    value: &ValueCandidate,
    kappa: &FeedbackMap,
    x: &AgentState,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let (decrease, cost) = micro_terms(model, value, kappa, x)?;
    Ok(decrease - alpha * cost)
}

/// Largest `alpha` supported by a set of states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha: f64,
    /// No state had a positive stage cost, so the ratio set was empty.
    pub vacuous: bool,
    pub ratio_states: usize,
    pub zero_cost_states: usize,
}

/// `min (V(x) - V(f(x, kappa(x)))) / l(x, kappa(x))` over the given states
/// with positive stage cost, capped at 1. Zero-cost states must not increase
/// `V`.
pub fn max_alpha_over(
    model: &SystemModel,
    value: &ValueCandidate,
    kappa: &FeedbackMap,
    states: &[AgentState],
) -> Result<AlphaEstimate> {
    let terms: Vec<(f64, f64)> = states
        .par_iter()
        .map(|x| micro_terms(model, value, kappa, x))
        .collect::<Result<_>>()?;
    let mut ratio = f64::INFINITY;
    let (mut ratio_states, mut zero_cost_states) = (0, 0);
    for (i, (decrease, cost)) in terms.iter().enumerate() {
        if *cost > ZERO_COST_TOL {
            ratio = ratio.min(decrease / cost);
            ratio_states += 1;
        } else {
            zero_cost_states += 1;
            if *decrease < -CERT_TOL {
                return Err(Error::Certificate(format!(
                    "state {i} has zero stage cost but V increases by {:e}",
                    -decrease
                )));
            }
        }
    }
    if ratio_states == 0 {
        return Ok(AlphaEstimate {
            alpha: 1.0,
            vacuous: true,
            ratio_states,
            zero_cost_states,
        });
    }
    if !(ratio > 0.0) {
        return Err(Error::Certificate(format!(
            "no alpha in (0, 1] is admissible: minimum decrease ratio is {ratio:e}"
        )));
    }
    Ok(AlphaEstimate {
        alpha: ratio.min(1.0),
        vacuous: false,
        ratio_states,
        zero_cost_states,
    })
}

/// [`max_alpha_over`] on `n_samples` seeded states with `M` agents.
pub fn max_alpha_micro(
    model: &SystemModel,
    value: &ValueCandidate,
    kappa: &FeedbackMap,
    agents: usize,
    n_samples: usize,
    seed: u64,
) -> Result<AlphaEstimate> {
    if n_samples == 0 || agents == 0 {
        return Err(Error::Parameter {
            name: "n_samples",
            reason: "need at least one sampled state with at least one agent".into(),
        });
    }
    let states: Vec<AgentState> = (0..n_samples as u64)
        .map(|i| {
            let mut rng = sampling::stream(seed, Tag::Rdp, agents as u64, i);
            sampling::sample_state(&mut rng, model.state_box(), agents, i)
        })
        .collect();
    max_alpha_over(model, value, kappa, &states)
}

/// Mean-field inequality residuals at one `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpCertificate {
    pub alpha: f64,
    pub min_residual: f64,
    pub pass: bool,
    /// One per tested measure, in input order.
    pub residuals: Vec<f64>,
    #[serde(default)]
    pub config: serde_json::Value,
}

/// `V(mu) - V(f(mu, kappa(mu))) - alpha l(mu, kappa(mu))` on every measure.
pub fn rdp_check_meanfield(
    model: &SystemModel,
    value: &ValueCandidate,
    kappa: &FeedbackMap,
    measures: &[AtomicMeasure],
    alpha: f64,
) -> Result<RdpCertificate> {
    check_alpha(alpha)?;
    if measures.is_empty() {
        return Err(Error::Parameter {
            name: "measures",
            reason: "need at least one test measure".into(),
        });
    }
    let residuals: Vec<f64> = measures
        .par_iter()
        .map(|mu| meanfield_terms(model, value, kappa, mu).map(|(d, c)| d - alpha * c))
        .collect::<Result<_>>()?;
    let min_residual = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RdpCertificate {
        alpha,
        min_residual,
        pass: min_residual >= -CERT_TOL,
        residuals,
        config: serde_json::Value::Null,
    })
}

/// Sampled MMD-Lipschitz lower bound for the microscopic value function at
/// population size `agents`.
pub fn lipschitz_check_value(
    value: &ValueCandidate,
    model: &SystemModel,
    k: &Kernel,
    agents: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    let f = |x: &AgentState| value.micro(x);
    estimate_lipschitz(LipschitzTarget::StateScalar(&f), model, k, agents, n_pairs, seed)
}
