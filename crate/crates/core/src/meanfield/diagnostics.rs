use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{ConvergenceReport, FitStatistic, ReportRow, Summary};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::measures::{kme_inner, mmd, AtomicMeasure};
use crate::kernels::clamped_sqrt;
use crate::sampling::{self, Tag};
use crate::systems::{AgentState, ControlInput, ControlSequence, SystemModel};

use super::{mf_step, mf_total_cost};

fn check_schedule(ms: &[usize], min: usize) -> Result<()> {
    if ms.is_empty() {
        return Err(Error::Parameter {
            name: "Ms",
            reason: "M schedule is empty".into(),
        });
    }
    if ms.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter {
            name: "Ms",
            reason: "M schedule must be strictly increasing".into(),
        });
    }
    if ms[0] < min {
        return Err(Error::Parameter {
            name: "Ms",
            reason: format!("every M must be at least {min}"),
        });
    }
    Ok(())
}

fn check_samples(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Parameter {
            name: "n_samples",
            reason: "must be at least 1".into(),
        });
    }
    Ok(())
}

/// Evaluates `f` on samples `0..n` in parallel; output is in index order.
fn per_sample<F>(n: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<f64> + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// `MMD(mu_hat[f_M(x, u)], f(mu_hat[x], u))` for one state and input.
pub fn one_step_discrepancy_at(
    model: &SystemModel,
    k: &Kernel,
    x: &AgentState,
    u: &ControlInput,
) -> Result<f64> {
    let micro = model.step(x, u)?.empirical();
    let limit = mf_step(model, &x.empirical(), u)?;
    mmd(k, &micro, &limit)
}

/// Sampled one-step mean-field discrepancy at population size `M`.
pub fn one_step_discrepancy(
    model: &SystemModel,
    k: &Kernel,
    agents: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Summary> {
    check_schedule(&[agents], 2)?;
    check_samples(n_samples)?;
    let values = per_sample(n_samples, |i| {
        let mut rng = sampling::stream(seed, Tag::OneStep, agents as u64, i);
        let x = sampling::sample_state(&mut rng, model.state_box(), agents, i);
        let u = sampling::sample_control(&mut rng, &model.controls());
        one_step_discrepancy_at(model, k, &x, &u)
    })?;
    Ok(Summary::from_values(values))
}

/// [`one_step_discrepancy`] over an `M` schedule, with the fitted rate.
pub fn one_step_convergence(
    model: &SystemModel,
    k: &Kernel,
    ms: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    check_schedule(ms, 2)?;
    let rows = ms
        .iter()
        .map(|&m| {
            Ok(ReportRow {
                m,
                summary: one_step_discrepancy(model, k, m, n_samples, seed)?,
                seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport::new("one-step", rows, FitStatistic::Max))
}

/// Both sides of the trajectory bound
/// `MMD(mu_hat(N), mu(N)) <= sum_{n=1}^{N} L_f^(n-1) r(N-n)` where
/// `r(n) = MMD(mu_hat(n+1), f(mu_hat(n), u(n)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `r(0), ..., r(N-1)`, in time order.
    pub residuals: Vec<f64>,
    pub lipschitz_f: f64,
}

impl TrajectoryBoundCheck {
    pub const TOL: f64 = 1e-9;

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + Self::TOL
    }
}

pub fn trajectory_bound_check(
    model: &SystemModel,
    k: &Kernel,
    x0: &AgentState,
    useq: &ControlSequence,
    lipschitz_f: f64,
) -> Result<TrajectoryBoundCheck> {
    if !(lipschitz_f >= 0.0 && lipschitz_f.is_finite()) {
        return Err(Error::Parameter {
            name: "lipschitz_f",
            reason: format!("must be nonnegative and finite, got {lipschitz_f}"),
        });
    }
    let micro = model.trajectory(x0, useq)?;
    let mut limit = x0.empirical();
    let mut residuals = Vec::with_capacity(useq.horizon());
    for (n, u) in useq.inputs().iter().enumerate() {
        let from_micro = mf_step(model, &micro[n].empirical(), u)?;
        residuals.push(mmd(k, &micro[n + 1].empirical(), &from_micro)?);
        limit = if n == 0 { from_micro } else { mf_step(model, &limit, u)? };
    }
    let lhs = mmd(k, &micro[useq.horizon()].empirical(), &limit)?;
    // newest residual carries L_f^0
    let mut rhs = 0.0;
    let mut factor = 1.0;
    for r in residuals.iter().rev() {
        rhs += factor * r;
        factor *= lipschitz_f;
    }
    Ok(TrajectoryBoundCheck {
        lhs,
        rhs,
        residuals,
        lipschitz_f,
    })
}

/// Sampled `|J_N^M(x0, u) - J_N(mu_hat[x0], u)|` over an `M` schedule.
pub fn cost_convergence(
    model: &SystemModel,
    ms: &[usize],
    horizon: usize,
    n_samples: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    if horizon == 0 {
        return Err(Error::Parameter {
            name: "horizon",
            reason: "N must be at least 1".into(),
        });
    }
    check_schedule(ms, 1)?;
    check_samples(n_samples)?;
    let rows = ms
        .iter()
        .map(|&m| {
            let values = per_sample(n_samples, |i| {
                let mut rng = sampling::stream(seed, Tag::Cost, m as u64, i);
                let x0 = sampling::sample_state(&mut rng, model.state_box(), m, i);
                let useq = sampling::sample_controls(&mut rng, &model.controls(), horizon);
                let micro = model.total_cost(&x0, &useq)?;
                let limit = mf_total_cost(model, &x0.empirical(), &useq)?;
                Ok((micro - limit).abs())
            })?;
            Ok(ReportRow {
                m,
                summary: Summary::from_values(values),
                seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport::new("cost-convergence", rows, FitStatistic::Max))
}

/// Sampled `|l_M(x, u) - l(mu_hat[x], u)|` over an `M` schedule. Draws the
/// same `(x, u)` as [`cost_convergence`] with `N = 1`.
pub fn stage_cost_convergence(
    model: &SystemModel,
    ms: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    check_schedule(ms, 1)?;
    check_samples(n_samples)?;
    let rows = ms
        .iter()
        .map(|&m| {
            let values = per_sample(n_samples, |i| {
                let mut rng = sampling::stream(seed, Tag::Cost, m as u64, i);
                let x = sampling::sample_state(&mut rng, model.state_box(), m, i);
                let u = sampling::sample_control(&mut rng, &model.controls());
                let micro = model.stage_cost(&x, &u)?;
                let limit = model.stage_cost_meanfield(&x.empirical(), &u)?;
                Ok((micro - limit).abs())
            })?;
            Ok(ReportRow {
                m,
                summary: Summary::from_values(values),
                seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport::new("stage-cost-convergence", rows, FitStatistic::Max))
}

/// `MMD(mu_hat_M, mu_ref)` for `M` i.i.d. draws from `mu_ref`, over
/// `n_seeds` independent draws per `M`; the rate is fitted on the median.
pub fn embedding_convergence(
    k: &Kernel,
    reference: &AtomicMeasure,
    ms: &[usize],
    n_seeds: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    check_schedule(ms, 1)?;
    check_samples(n_seeds)?;
    reference.check_in(k.domain())?;
    let ref_sq = kme_inner(k, reference, reference)?;
    let rows = ms
        .iter()
        .map(|&m| {
            let values = per_sample(n_seeds, |s| {
                let mut rng = sampling::stream(seed, Tag::Embedding, m as u64, s);
                let sample = sampling::draw_from(&mut rng, reference, m);
                let ss = kme_inner(k, &sample, &sample)?;
                let sr = kme_inner(k, &sample, reference)?;
                clamped_sqrt(ss - 2.0 * sr + ref_sq)
            })?;
            Ok(ReportRow {
                m,
                summary: Summary::from_values(values),
                seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport::new("embedding-convergence", rows, FitStatistic::Median))
}
