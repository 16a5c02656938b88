//! Property tests for measures, models and mean-field diagnostics.

use kmfl::kernels::{Kernel, StateBox};
use kmfl::meanfield::{declared_constants, estimate_lipschitz, mf_step, LipschitzTarget};
use kmfl::measures::{measure_equal, mmd, AtomicMeasure};
use kmfl::sampling::{self, Tag};
use kmfl::systems::{AgentState, ControlInput, StageCost, SystemModel};
use proptest::prelude::*;

fn unit() -> StateBox {
    StateBox::unit(1).unwrap()
}

fn measure() -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec((0.0..=1.0f64, 0.05..1.0f64), 1..10).prop_map(|atoms| {
        let (coords, raw): (Vec<f64>, Vec<f64>) = atoms.into_iter().unzip();
        AtomicMeasure::new(1, coords, sampling::normalize(&raw)).unwrap()
    })
}

fn state(lo: f64, hi: f64) -> impl Strategy<Value = AgentState> {
    prop::collection::vec(lo..=hi, 2..30).prop_map(|xs| AgentState::new(1, xs).unwrap())
}

fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mmd_is_a_pseudometric(a in measure(), b in measure(), c in measure()) {
        let k = Kernel::gaussian(0.5, unit()).unwrap();
        let d = |x: &AtomicMeasure, y: &AtomicMeasure| mmd(&k, x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-12);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
        prop_assert!(d(&a, &b) <= 2.0f64.sqrt() * k.bound().sqrt() + 1e-12);
    }

    #[test]
    fn step_is_permutation_equivariant(x in state(0.0, 1.0), seed in any::<u64>(), u in -0.1..=0.1f64) {
        let b = unit();
        let models = [
            SystemModel::linear_consensus(b.clone(), 0.5, 0.1).unwrap(),
            SystemModel::bounded_confidence(b, 0.4, 0.25, 0.1).unwrap(),
        ];
        let perm = sampling::permutation(&mut sampling::stream(seed, Tag::Simulate, 0, 0), x.agents());
        let u = ControlInput(vec![u]);
        for model in &models {
            let px = x.permuted(&perm);
            prop_assert_eq!(model.step(&px, &u).unwrap(), model.step(&x, &u).unwrap().permuted(&perm));
            prop_assert_eq!(model.stage_cost(&px, &u).unwrap(), model.stage_cost(&x, &u).unwrap());
            prop_assert!(model.stage_cost(&x, &u).unwrap().abs() <= model.cost_bound());
            prop_assert!(measure_equal(&px.empirical(), &x.empirical(), 0.0));
        }
    }

    #[test]
    fn consensus_contracts_variance(x in state(0.3, 0.7)) {
        // interior states and u = 0: no clamping, Var(x+) = (1 - h M/(M-1))^2 Var(x)
        let model = SystemModel::linear_consensus(unit(), 0.5, 0.1).unwrap();
        let next = model.step(&x, &ControlInput::zeros(1)).unwrap();
        let m = x.agents() as f64;
        let factor = (1.0 - 0.5 * m / (m - 1.0)).powi(2);
        let want = factor * variance(x.coords());
        prop_assert!((variance(next.coords()) - want).abs() < 1e-14);
    }

    #[test]
    fn meanfield_consensus_moves_atoms_toward_the_mean(mu in measure(), u in -0.05..=0.05f64) {
        let model = SystemModel::linear_consensus(unit(), 0.5, 0.1).unwrap();
        let next = mf_step(&model, &mu, &ControlInput(vec![u])).unwrap();
        let mean = mu.mean()[0];
        prop_assert_eq!(next.weights(), mu.weights());
        for (a, b) in mu.atoms().zip(next.atoms()) {
            let want = (a[0] + 0.5 * (mean - a[0]) + u).clamp(0.0, 1.0);
            prop_assert!((b[0] - want).abs() < 1e-14);
        }
    }
}

#[test]
fn sampled_lipschitz_estimates_stay_below_declared_constants() {
    let b = unit();
    let k = Kernel::augmented(0.5, 1.0, b.clone()).unwrap();
    let models = [
        SystemModel::linear_consensus(b.clone(), 0.5, 0.1).unwrap(),
        SystemModel::bounded_confidence(b.clone(), 0.5, 0.3, 0.1).unwrap(),
        SystemModel::linear_consensus(b, 0.3, 0.1)
            .unwrap()
            .with_cost(StageCost::sample_variance(0.2))
            .unwrap(),
    ];
    for model in &models {
        let declared = declared_constants(model, &k).unwrap();
        for m in [4, 16, 64] {
            let lf = estimate_lipschitz(LipschitzTarget::Dynamics, model, &k, m, 200, 99).unwrap();
            let ll = estimate_lipschitz(LipschitzTarget::StageCost, model, &k, m, 200, 99).unwrap();
            assert!(lf <= declared.lipschitz_dynamics, "{}: L_f {lf} at M={m}", model.describe());
            assert!(ll <= declared.lipschitz_cost, "{}: L_l {ll} at M={m}", model.describe());
        }
    }
}

#[test]
fn one_step_discrepancy_decays_in_m() {
    let model = SystemModel::linear_consensus(unit(), 0.5, 0.1).unwrap();
    let k = Kernel::gaussian(0.5, unit()).unwrap();
    let maxima: Vec<f64> = [10, 40, 160]
        .iter()
        .map(|&m| kmfl::meanfield::one_step_discrepancy(&model, &k, m, 60, 1).unwrap().max)
        .collect();
    assert!(maxima.windows(2).all(|w| w[1] < w[0]), "{maxima:?}");
}
