//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p kmfl-cli --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use kmfl::kernels::{Kernel, StateBox};
use kmfl::meanfield::{
    cost_convergence, declared_constants, embedding_convergence, one_step_convergence,
    one_step_discrepancy, trajectory_bound_check,
};
use kmfl::measures::{integrate_rkhs, kme_eval, mmd, wasserstein1, AtomicMeasure, RkhsCombination};
use kmfl::rdp::{greedy_feedback, max_alpha_micro, rdp_check_meanfield, FeedbackMap, ValueCandidate};
use kmfl::sampling::{self, Tag};
use kmfl::systems::{AgentState, StageCost, SystemModel};
use rand::Rng;

const SEED: u64 = 20_240_601;
const SCHEDULE: [usize; 6] = [25, 50, 100, 200, 400, 800];

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

fn unit(d: usize) -> StateBox {
    StateBox::unit(d).unwrap()
}

fn gaussian(d: usize) -> Kernel {
    Kernel::gaussian(0.5, unit(d)).unwrap()
}

fn consensus() -> SystemModel {
    SystemModel::linear_consensus(unit(1), 0.5, 0.1).unwrap()
}

/// Independent generator per criterion and instance.
fn rng(criterion: u64, i: u64) -> impl Rng {
    sampling::stream(SEED, Tag::Simulate, 1000 + criterion, i)
}

fn measure_upto(r: &mut impl Rng, atoms: usize) -> AtomicMeasure {
    let n = r.random_range(1..=atoms);
    sampling::random_measure(r, &unit(1), n)
}

fn c1_metric_domination() -> Check {
    let k = gaussian(1);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..200 {
        let mut r = rng(1, i);
        let (mu, nu) = (measure_upto(&mut r, 16), measure_upto(&mut r, 16));
        let gap = mmd(&k, &mu, &nu).unwrap() - wasserstein1(&k, &mu, &nu).unwrap();
        worst = worst.max(gap);
        if gap > 1e-9 {
            return Err(format!("pair {i}: mmd - w1 = {gap:e}"));
        }
    }
    Ok(format!("200 pairs, max(mmd - w1) = {worst:.3e}"))
}

fn c2_linearity() -> Check {
    let k = gaussian(1);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let mut r = rng(2, i);
        let (mu, nu) = (measure_upto(&mut r, 16), measure_upto(&mut r, 16));
        let lambda: f64 = r.random();
        let z = [r.random::<f64>()];
        let mixed = kme_eval(&k, &AtomicMeasure::mix(lambda, &mu, &nu).unwrap(), &z).unwrap();
        let split = lambda * kme_eval(&k, &mu, &z).unwrap() + (1.0 - lambda) * kme_eval(&k, &nu, &z).unwrap();
        worst = worst.max((mixed - split).abs());
    }
    if worst <= 1e-12 {
        Ok(format!("100 mixtures, max error {worst:.3e}"))
    } else {
        Err(format!("max error {worst:e} > 1e-12"))
    }
}

fn c3_reproducing() -> Check {
    let k = gaussian(1);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let mut r = rng(3, i);
        let n = r.random_range(1..=12);
        let centers: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>()]).collect();
        let coefs: Vec<f64> = (0..n).map(|_| 4.0 * r.random::<f64>() - 2.0).collect();
        let f = RkhsCombination::new(&centers, coefs).unwrap();
        let mu = measure_upto(&mut r, 16);
        let a = integrate_rkhs(&k, &f, &mu).unwrap();
        let b = f.inner_with_embedding(&k, &mu).unwrap();
        worst = worst.max((a - b).abs());
    }
    if worst <= 1e-10 {
        Ok(format!("100 instances, max error {worst:.3e}"))
    } else {
        Err(format!("max error {worst:e} > 1e-10"))
    }
}

fn c4_exact_restriction() -> Check {
    let model = SystemModel::bounded_confidence(unit(1), 0.5, 0.3, 0.1).unwrap();
    let k = gaussian(1);
    let mut out = Vec::new();
    for m in [10, 100] {
        let s = one_step_discrepancy(&model, &k, m, 200, SEED).unwrap();
        if s.max > 1e-12 {
            return Err(format!("M={m}: max discrepancy {:e}", s.max));
        }
        out.push(format!("M={m}: max {:e}", s.max));
    }
    Ok(out.join(", "))
}

fn slope_in(slope: Option<f64>, lo: f64, hi: f64, what: &str) -> Check {
    match slope {
        Some(s) if (lo..=hi).contains(&s) => Ok(format!("{what} slope {s:.4} in [{lo}, {hi}]")),
        Some(s) => Err(format!("{what} slope {s:.4} outside [{lo}, {hi}]")),
        None => Err(format!("{what} slope undefined")),
    }
}

fn c5_one_step_rate() -> Check {
    let report = one_step_convergence(&consensus(), &gaussian(1), &SCHEDULE, 200, SEED).unwrap();
    slope_in(report.slope, -1.15, -0.85, "one-step")
}

fn c6_trajectory_bound() -> Check {
    let model = consensus();
    let k = gaussian(1);
    let lf = declared_constants(&model, &k).unwrap().lipschitz_dynamics;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_one = 0.0f64;
    for m in [10, 100] {
        for i in 0..100 {
            let mut r = sampling::stream(SEED, Tag::TrajectoryBound, m as u64, i);
            let x0 = sampling::sample_state(&mut r, model.state_box(), m, i);
            let useq = sampling::sample_controls(&mut r, &model.controls(), 5);
            let c = trajectory_bound_check(&model, &k, &x0, &useq, lf).unwrap();
            worst = worst.max(c.lhs - c.rhs);
            if !c.holds() {
                return Err(format!("M={m} instance {i}: lhs {} > rhs {}", c.lhs, c.rhs));
            }
            let one = kmfl::systems::ControlSequence::new(vec![useq.inputs()[0].clone()]).unwrap();
            let c1 = trajectory_bound_check(&model, &k, &x0, &one, lf).unwrap();
            worst_one = worst_one.max((c1.lhs - c1.rhs).abs());
        }
    }
    if worst_one > 1e-12 {
        return Err(format!("N=1 mismatch {worst_one:e}"));
    }
    Ok(format!(
        "L_f = {lf:.4}, 200 instances, max(lhs - rhs) = {worst:.3e}, N=1 max |lhs - rhs| = {worst_one:.1e}"
    ))
}

fn c7_cost_rate() -> Check {
    let report = cost_convergence(&consensus(), &SCHEDULE, 5, 200, SEED).unwrap();
    slope_in(report.slope, -1.15, -0.85, "cost")
}

fn c8_embedding_rate() -> Check {
    let k = gaussian(1);
    let reference = AtomicMeasure::grid(&unit(1), 4096).unwrap();
    let report = embedding_convergence(&k, &reference, &[64, 256, 1024, 4096], 20, SEED).unwrap();
    slope_in(report.slope, -0.65, -0.35, "median mmd")
}

fn c9_rdp_threshold() -> Check {
    let model = consensus().with_cost(StageCost::variance(0.1)).unwrap();
    let k = gaussian(1);
    let v = ValueCandidate::variance(1.0, &k).unwrap();
    let zero = FeedbackMap::zero(&model);
    let est = max_alpha_micro(&model, &v, &zero, 800, 200, SEED).unwrap();
    let h_eff = 0.5 * 800.0 / 799.0;
    let target = 1.0 - (1.0 - h_eff) * (1.0 - h_eff);
    if (est.alpha - target).abs() > 0.01 {
        return Err(format!("alpha(800) = {} vs {target}", est.alpha));
    }
    let measures: Vec<AtomicMeasure> = (0..100)
        .map(|i| sampling::random_measure(&mut rng(9, i), &unit(1), 2))
        .collect();
    let low = rdp_check_meanfield(&model, &v, &zero, &measures, 0.73).unwrap();
    let high = rdp_check_meanfield(&model, &v, &zero, &measures, 0.77).unwrap();
    if !low.pass || high.pass {
        return Err(format!("pass at 0.73: {}, pass at 0.77: {}", low.pass, high.pass));
    }
    Ok(format!(
        "alpha(800) = {:.6} (target {target:.6}); mean field passes at 0.73, fails at 0.77",
        est.alpha
    ))
}

fn c10_invariance() -> Check {
    let b1 = unit(1);
    let b2 = unit(2);
    let k1 = gaussian(1);
    let k2 = gaussian(2);
    let models = [
        SystemModel::linear_consensus(b1.clone(), 0.5, 0.1).unwrap(),
        SystemModel::bounded_confidence(b1.clone(), 0.5, 0.3, 0.1).unwrap(),
        SystemModel::cucker_smale(b2.clone(), 0.5, 0.5, 0.1).unwrap(),
    ];
    let mut checked = 0usize;
    for model in &models {
        let k = if model.state_box().dim() == 1 { &k1 } else { &k2 };
        let costs = [
            StageCost::variance(0.1),
            StageCost::sample_variance(0.1),
            StageCost::kernel_cohesion(0.1, k.clone()),
        ];
        let values = [
            ValueCandidate::variance(1.0, k).unwrap(),
            ValueCandidate::kernel_cohesion(1.0, k.clone()).unwrap(),
        ];
        for cost in costs {
            let model = model.clone().with_cost(cost).unwrap();
            let mut feedbacks = vec![FeedbackMap::zero(&model)];
            for v in &values {
                feedbacks.push(greedy_feedback(&model, v, 3).unwrap());
            }
            for i in 0..100u64 {
                let mut r = rng(10, i);
                let m = r.random_range(2..=24);
                let x = sampling::sample_state(&mut r, model.state_box(), m, i);
                let u = sampling::sample_control(&mut r, &model.controls());
                let perm = sampling::permutation(&mut r, m);
                let px = x.permuted(&perm);
                let stepped: AgentState = model.step(&x, &u).unwrap();
                if model.step(&px, &u).unwrap() != stepped.permuted(&perm) {
                    return Err(format!("{} step not equivariant (instance {i})", model.name()));
                }
                if model.stage_cost(&px, &u).unwrap() != model.stage_cost(&x, &u).unwrap() {
                    return Err(format!("{} cost {} not invariant", model.name(), model.cost().name()));
                }
                for v in &values {
                    if v.micro(&px).unwrap() != v.micro(&x).unwrap() {
                        return Err(format!("value {:?} not invariant", v.kind()));
                    }
                }
                for f in &feedbacks {
                    if f.micro(&px).unwrap() != f.micro(&x).unwrap() {
                        return Err(format!("feedback {:?} not invariant", f.kind()));
                    }
                }
                checked += 1;
            }
        }
    }
    Ok(format!(
        "{checked} permuted instances: 3 models x 3 costs, 2 values, 3 feedbacks, all bit-exact"
    ))
}

const SMALL_CONFIG: &str = r#"{
    "box": {"lower": [0.0], "upper": [1.0]},
    "kernel": {"family": "gaussian", "bandwidth": 0.5},
    "model": {"name": "linear_consensus", "h": 0.5, "u_max": 0.1},
    "ms": [10, 20, 40],
    "samples": 24,
    "horizon": 3,
    "agents": 16,
    "reference_per_dim": 128,
    "rdp": {"alpha": 0.5, "feedback": {"kind": "greedy", "grid_res": 3}, "test_measures": 10}
}"#;

fn run_cli(exp: &str, config: &Path, out: &Path, jobs: usize) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_kmfl"))
        .args([exp, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--seed", "7", "--jobs", &jobs.to_string()])
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("{exp} exited with {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
    }
    std::fs::read(out.join(format!("{exp}.csv"))).map_err(|e| e.to_string())
}

fn c11_reproducibility() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    std::fs::write(&config, SMALL_CONFIG).map_err(|e| e.to_string())?;
    let experiments = [
        "simulate",
        "one-step",
        "trajectory-bound",
        "cost-convergence",
        "stage-cost-convergence",
        "embedding-convergence",
        "lipschitz",
        "rdp",
    ];
    for exp in experiments {
        let mut outputs = Vec::new();
        for (run, jobs) in [(0, 1), (1, 1), (2, 8), (3, 8)] {
            outputs.push(run_cli(exp, &config, &dir.path().join(format!("run{run}")), jobs)?);
        }
        if outputs.iter().any(|o| o != &outputs[0]) {
            return Err(format!("{exp}: CSV differs across runs or worker counts"));
        }
    }
    Ok(format!("{} experiments, 2 runs each at 1 and 8 workers, byte-identical", experiments.len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 metric domination", Duration::from_secs(10), c1_metric_domination),
        ("2 embedding linearity", Duration::from_secs(1), c2_linearity),
        ("3 reproducing identity", Duration::from_secs(1), c3_reproducing),
        ("4 exact-restriction models", Duration::from_secs(30), c4_exact_restriction),
        ("5 one-step mean-field rate", Duration::from_secs(300), c5_one_step_rate),
        ("6 trajectory bound", Duration::from_secs(120), c6_trajectory_bound),
        ("7 cost convergence", Duration::from_secs(600), c7_cost_rate),
        ("8 embedding LLN", Duration::from_secs(300), c8_embedding_rate),
        ("9 RDP threshold", Duration::from_secs(120), c9_rdp_threshold),
        ("10 invariance suite", Duration::from_secs(60), c10_invariance),
        ("11 CLI reproducibility", Duration::from_secs(60), c11_reproducibility),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (status, detail) = match result {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {elapsed:.1?} over the {budget:?} budget")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("[{status}] criterion {name}: {detail} ({elapsed:.2?})");
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
