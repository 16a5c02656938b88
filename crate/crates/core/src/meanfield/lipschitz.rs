//! Sampled Lipschitz estimates with respect to the embedded product norm
//! `sqrt(MMD(mu_hat[x], mu_hat[x'])^2 + |u - u'|^2)`, and the declared
//! constants of the zoo models.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelFamily};
use crate::measures::mmd;
use crate::sampling::{self, Tag};
use crate::systems::{AgentState, ControlInput, StageCost, SystemModel};

/// Multiplier applied to sampled estimates when no analytic constant is
/// available.
pub const SAFETY_FACTOR: f64 = 1.5;

/// Input pairs closer than this are skipped.
const MIN_INPUT_DISTANCE: f64 = 1e-10;

/// Relative size of the local perturbations used for every other pair.
const LOCAL_SCALE: f64 = 0.02;

/// What to estimate a Lipschitz constant of.
#[derive(Clone, Copy)]
pub enum LipschitzTarget<'a> {
    /// The model's microscopic transition map; output distance is the MMD of
    /// the images.
    Dynamics,
    /// The model's microscopic stage cost.
    StageCost,
    /// A custom state-and-input map, measured like [`LipschitzTarget::Dynamics`].
    Map(&'a (dyn Fn(&AgentState, &ControlInput) -> Result<AgentState> + Sync)),
    /// A custom scalar function of state and input.
    Scalar(&'a (dyn Fn(&AgentState, &ControlInput) -> Result<f64> + Sync)),
    /// A scalar function of the state alone; input distance is the MMD only.
    StateScalar(&'a (dyn Fn(&AgentState) -> Result<f64> + Sync)),
}

fn perturbed_state<R: Rng>(rng: &mut R, model: &SystemModel, x: &AgentState) -> AgentState {
    let b = model.state_box();
    let d = x.dim();
    let mut coords = x.coords().to_vec();
    for (i, c) in coords.iter_mut().enumerate() {
        let side = b.upper()[i % d] - b.lower()[i % d];
        *c += LOCAL_SCALE * side * (2.0 * rng.random::<f64>() - 1.0);
    }
    for p in coords.chunks_exact_mut(d) {
        b.clamp_in_place(p);
    }
    AgentState::new(d, coords).expect("same shape as x")
}

fn perturbed_control<R: Rng>(rng: &mut R, model: &SystemModel, u: &ControlInput) -> ControlInput {
    let u_max = model.controls().u_max;
    ControlInput(
        u.0.iter()
            .map(|v| (v + LOCAL_SCALE * u_max * (2.0 * rng.random::<f64>() - 1.0)).clamp(-u_max, u_max))
            .collect(),
    )
}

/// Ratio for pair `i`, or `None` when the inputs coincide.
fn pair_ratio(
    target: LipschitzTarget<'_>,
    model: &SystemModel,
    k: &Kernel,
    agents: usize,
    seed: u64,
    tag: Tag,
    i: u64,
) -> Result<Option<f64>> {
    let mut rng = sampling::stream(seed, tag, agents as u64, i);
    let b = model.state_box();
    let cb = model.controls();
    let x = sampling::sample_state(&mut rng, b, agents, i);
    let u = sampling::sample_control(&mut rng, &cb);
    let (x2, u2) = if i % 2 == 1 {
        (perturbed_state(&mut rng, model, &x), perturbed_control(&mut rng, model, &u))
    } else {
        // `i + 1` keeps the cluster schedule independent of the first draw
        (
            sampling::sample_state(&mut rng, b, agents, i + 1),
            sampling::sample_control(&mut rng, &cb),
        )
    };
    let state_dist = mmd(k, &x.empirical(), &x2.empirical())?;
    let du: f64 = u.0.iter().zip(&u2.0).map(|(a, b)| (a - b) * (a - b)).sum();
    let input = match target {
        LipschitzTarget::StateScalar(_) => state_dist,
        _ => (state_dist * state_dist + du).sqrt(),
    };
    if input < MIN_INPUT_DISTANCE {
        return Ok(None);
    }
    let output = match target {
        LipschitzTarget::Dynamics => mmd(
            k,
            &model.step(&x, &u)?.empirical(),
            &model.step(&x2, &u2)?.empirical(),
        )?,
        LipschitzTarget::StageCost => (model.stage_cost(&x, &u)? - model.stage_cost(&x2, &u2)?).abs(),
        LipschitzTarget::Map(f) => mmd(k, &f(&x, &u)?.empirical(), &f(&x2, &u2)?.empirical())?,
        LipschitzTarget::Scalar(f) => (f(&x, &u)? - f(&x2, &u2)?).abs(),
        LipschitzTarget::StateScalar(f) => (f(&x)? - f(&x2)?).abs(),
    };
    Ok(Some(output / input))
}

fn estimate_tagged(
    target: LipschitzTarget<'_>,
    model: &SystemModel,
    k: &Kernel,
    agents: usize,
    n_pairs: usize,
    seed: u64,
    tag: Tag,
) -> Result<f64> {
    if n_pairs == 0 {
        return Err(Error::Parameter {
            name: "n_pairs",
            reason: "must be at least 1".into(),
        });
    }
    if agents == 0 {
        return Err(Error::Parameter {
            name: "agents",
            reason: "must be at least 1".into(),
        });
    }
    let ratios: Vec<Option<f64>> = (0..n_pairs as u64)
        .into_par_iter()
        .map(|i| pair_ratio(target, model, k, agents, seed, tag, i))
        .collect::<Result<_>>()?;
    ratios
        .into_iter()
        .flatten()
        .reduce(f64::max)
        .ok_or_else(|| Error::Estimation(format!("all {n_pairs} sampled pairs were degenerate")))
}

/// Largest sampled ratio of output distance to input distance at population
/// size `agents`: a lower bound on the Lipschitz constant. Half of the pairs
/// are independent draws, half are local perturbations.
pub fn estimate_lipschitz(
    target: LipschitzTarget<'_>,
    model: &SystemModel,
    k: &Kernel,
    agents: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    estimate_tagged(target, model, k, agents, n_pairs, seed, Tag::Lipschitz)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSource {
    Analytic,
    /// `SAFETY_FACTOR` times a sampled estimate.
    Sampled,
}

/// Constants `L_f`, `L_l`, `B_l` of a model, relative to the MMD of `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    pub lipschitz_dynamics: f64,
    pub dynamics_source: ConstantSource,
    pub lipschitz_cost: f64,
    pub cost_source: ConstantSource,
    pub cost_bound: f64,
}

/// Populations, pair count and seed behind sampled declarations.
const DECLARE_AGENTS: [usize; 3] = [2, 8, 32];
const DECLARE_PAIRS: usize = 256;
const DECLARE_SEED: u64 = 0x5EED_C0DE;

fn sampled_declaration(target: LipschitzTarget<'_>, model: &SystemModel, k: &Kernel) -> Result<f64> {
    let mut best = 0.0f64;
    for m in DECLARE_AGENTS {
        let est = estimate_tagged(target, model, k, m, DECLARE_PAIRS, DECLARE_SEED, Tag::Constants)?;
        best = best.max(est);
    }
    Ok(SAFETY_FACTOR * best)
}

/// Analytic MMD-Lipschitz constant of the state part of the cost, where one
/// is known.
///
/// * Variance under the augmented kernel: the coordinates and their squares
///   lie in the RKHS of `lambda (1 + x.y)^2` with norms `1/sqrt(2 lambda)`
///   (unit linear functional) and `sqrt(d / lambda)` (for `|x|^2`). Hence
///   `|Var mu - Var nu| <= (sqrt(d/lambda) + 2 R / sqrt(2 lambda)) MMD`,
///   where `R` bounds `|mean|` on the box.
/// * Kernel cohesion with the metric kernel itself:
///   `| |a|^2 - |b|^2 | <= |a - b| (|a| + |b|) <= 2 sqrt(k_max) |a - b|`.
fn analytic_state_cost_constant(model: &SystemModel, k: &Kernel) -> Option<f64> {
    if k.domain() != model.state_box() {
        return None;
    }
    let variance = |lambda_poly: f64| {
        let d = k.dim() as f64;
        let r = k.domain().max_norm();
        (d / lambda_poly).sqrt() + 2.0 * r / (2.0 * lambda_poly).sqrt()
    };
    match (model.cost(), k.family()) {
        (StageCost::Variance { .. }, KernelFamily::Augmented { lambda_poly, .. }) if lambda_poly > 0.0 => {
            Some(variance(lambda_poly))
        }
        (StageCost::SampleVariance { .. }, KernelFamily::Augmented { lambda_poly, .. })
            if lambda_poly > 0.0 =>
        {
            // M/(M-1) <= 2
            Some(2.0 * variance(lambda_poly))
        }
        (StageCost::KernelCohesion { kernel, .. }, _) if kernel == k => Some(2.0 * k.bound().sqrt()),
        _ => None,
    }
}

/// Declared constants of `model` with respect to the MMD of `k`.
///
/// `L_f` is always a sampled declaration. `L_l` is analytic when
/// [`analytic_state_cost_constant`] applies: the control penalty
/// contributes `2 lambda_u |u|_max`, and the two parts combine as
/// `sqrt(a^2 + b^2)`, which bounds the cost difference in both the sum and
/// the product norm.
pub fn declared_constants(model: &SystemModel, k: &Kernel) -> Result<DeclaredConstants> {
    let lipschitz_dynamics = sampled_declaration(LipschitzTarget::Dynamics, model, k)?;
    let (lipschitz_cost, cost_source) = match analytic_state_cost_constant(model, k) {
        Some(a) => {
            let b = 2.0 * model.cost().lambda_u() * model.controls().max_norm();
            ((a * a + b * b).sqrt(), ConstantSource::Analytic)
        }
        None => (
            sampled_declaration(LipschitzTarget::StageCost, model, k)?,
            ConstantSource::Sampled,
        ),
    };
    Ok(DeclaredConstants {
        lipschitz_dynamics,
        dynamics_source: ConstantSource::Sampled,
        lipschitz_cost,
        cost_source,
        cost_bound: model.cost_bound(),
    })
}
