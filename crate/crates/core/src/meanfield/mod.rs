//! Mean-field dynamics and costs on atomic measures, and the diagnostics
//! that measure how far a finite population is from its mean-field limit.
//!
//! The limit objects are supplied analytically by each model
//! ([`SystemModel::step_meanfield`], [`SystemModel::stage_cost_meanfield`]).
//! Suprema over all states and inputs are replaced by maxima over seeded
//! samples, which are lower bounds on the true suprema.

mod diagnostics;
mod lipschitz;
mod report;

pub use diagnostics::{
    cost_convergence, embedding_convergence, one_step_convergence, one_step_discrepancy,
    one_step_discrepancy_at,
    stage_cost_convergence, trajectory_bound_check, TrajectoryBoundCheck,
};
pub use lipschitz::{
    declared_constants, estimate_lipschitz, ConstantSource, DeclaredConstants, LipschitzTarget,
    SAFETY_FACTOR,
};
pub use report::{fit_loglog, fmt_f64, ConvergenceReport, FitStatistic, ReportRow, Summary};

use crate::error::Result;
use crate::measures::AtomicMeasure;
use crate::systems::{ControlInput, ControlSequence, SystemModel};

/// One mean-field step `mu+ = f(mu, u)`.
pub fn mf_step(model: &SystemModel, mu: &AtomicMeasure, u: &ControlInput) -> Result<AtomicMeasure> {
    model.step_meanfield(mu, u)
}

/// Measures `mu(0), ..., mu(N)`.
pub fn mf_trajectory(
    model: &SystemModel,
    mu0: &AtomicMeasure,
    useq: &ControlSequence,
) -> Result<Vec<AtomicMeasure>> {
    let mut out = Vec::with_capacity(useq.horizon() + 1);
    out.push(mu0.clone());
    for u in useq.inputs() {
        let next = model.step_meanfield(out.last().expect("nonempty"), u)?;
        out.push(next);
    }
    Ok(out)
}

/// Mean-field stage cost `l(mu, u)`.
pub fn mf_stage_cost(model: &SystemModel, mu: &AtomicMeasure, u: &ControlInput) -> Result<f64> {
    model.stage_cost_meanfield(mu, u)
}

/// `J_N(mu0, u) = sum_{n < N} l(mu(n), u(n))`.
pub fn mf_total_cost(model: &SystemModel, mu0: &AtomicMeasure, useq: &ControlSequence) -> Result<f64> {
    let traj = mf_trajectory(model, mu0, useq)?;
    traj.iter()
        .zip(useq.inputs())
        .map(|(mu, u)| model.stage_cost_meanfield(mu, u))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Kernel, StateBox};
    use crate::measures::measure_equal;
    use crate::systems::{AgentState, StageCost};

    fn consensus() -> SystemModel {
        SystemModel::linear_consensus(StateBox::unit(1).unwrap(), 0.5, 0.2).unwrap()
    }

    #[test]
    fn dirac_is_a_fixed_point() {
        let m = consensus();
        let d = AtomicMeasure::dirac(&[0.3]).unwrap();
        let z = ControlInput::zeros(1);
        assert_eq!(mf_step(&m, &d, &z).unwrap(), d);
        let useq = ControlSequence::zeros(1, 4).unwrap();
        assert!(mf_trajectory(&m, &d, &useq).unwrap().iter().all(|mu| *mu == d));
    }

    #[test]
    fn two_atom_hand_steps() {
        let m = consensus();
        let mu = AtomicMeasure::uniform(1, vec![0.4, 0.6]).unwrap();
        let z = ControlInput::zeros(1);
        let one = mf_step(&m, &mu, &z).unwrap();
        let want = AtomicMeasure::uniform(1, vec![0.45, 0.55]).unwrap();
        assert!(measure_equal(&one, &want, 1e-15));
        let traj = mf_trajectory(&m, &mu, &ControlSequence::zeros(1, 2).unwrap()).unwrap();
        let want2 = AtomicMeasure::uniform(1, vec![0.475, 0.525]).unwrap();
        assert!(measure_equal(&traj[2], &want2, 1e-15));
        assert_eq!(traj[1], one);
    }

    #[test]
    fn weights_preserved() {
        let m = consensus();
        let mu = AtomicMeasure::new(1, vec![0.1, 0.7, 0.9], vec![0.2, 0.3, 0.5]).unwrap();
        let next = mf_step(&m, &mu, &ControlInput(vec![0.15])).unwrap();
        assert_eq!(next.weights(), mu.weights());
    }

    #[test]
    fn costs() {
        let m = consensus();
        let z = ControlInput::zeros(1);
        assert_eq!(mf_stage_cost(&m, &AtomicMeasure::dirac(&[0.2]).unwrap(), &z).unwrap(), 0.0);
        let mu = AtomicMeasure::uniform(1, vec![0.4, 0.6]).unwrap();
        assert!((mf_stage_cost(&m, &mu, &z).unwrap() - 0.01).abs() < 1e-15);

        let k = Kernel::gaussian(0.5, StateBox::unit(1).unwrap()).unwrap();
        let mc = consensus().with_cost(StageCost::kernel_cohesion(0.1, k.clone())).unwrap();
        let u = ControlInput(vec![0.2]);
        let c = mf_stage_cost(&mc, &AtomicMeasure::dirac(&[0.7]).unwrap(), &u).unwrap();
        assert!((c - (-1.0 + 0.1 * 0.04)).abs() < 1e-15);

        // total cost: 0.01 at n=0, then 0.0025 at n=1 (atoms 0.45/0.55)
        let useq = ControlSequence::zeros(1, 2).unwrap();
        let j = mf_total_cost(&m, &mu, &useq).unwrap();
        assert!((j - 0.0125).abs() < 1e-15);
        let j1 = mf_total_cost(&m, &mu, &ControlSequence::zeros(1, 1).unwrap()).unwrap();
        assert_eq!(j1, mf_stage_cost(&m, &mu, &z).unwrap());
    }

    #[test]
    fn micro_cost_equals_meanfield_on_empirical() {
        let m = consensus();
        let x = AgentState::new(1, vec![0.12, 0.5, 0.33, 0.91, 0.07]).unwrap();
        let u = ControlInput(vec![-0.1]);
        assert_eq!(
            m.stage_cost(&x, &u).unwrap(),
            mf_stage_cost(&m, &x.empirical(), &u).unwrap()
        );
    }
}
