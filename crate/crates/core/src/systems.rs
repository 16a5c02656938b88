//! Finite-population control systems `x+ = f_M(x, u)` with stage costs
//! `l_M(x, u)`, and the built-in model zoo.
//!
//! Each model evaluates its microscopic update and its mean-field update
//! through the same code: the micro map is the measure-level map applied to
//! the uniform empirical measure, with an optional finite-`M` correction.
//! Interaction sums always run over atoms in a canonical (sorted) order, so
//! relabeling agents permutes the output exactly, bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Kernel, StateBox};
use crate::measures::{self, cmp_points, weighted_mean, AtomicMeasure};

/// Positions of `M` agents, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    dim: usize,
    coords: Vec<f64>,
}

impl AgentState {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::Invariant(
                "agent state needs at least one agent with a positive dimension".into(),
            ));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invariant("agent positions must be finite".into()));
        }
        Ok(AgentState { dim, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Invariant("agents must share one dimension".into()));
        }
        AgentState::new(dim, points.concat())
    }

    /// Number of agents `M`.
    pub fn agents(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Relabeled state whose `i`-th agent is agent `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> AgentState {
        let coords = perm.iter().flat_map(|&p| self.agent(p).iter().copied()).collect();
        AgentState {
            dim: self.dim,
            coords,
        }
    }

    pub fn check_in(&self, domain: &StateBox) -> Result<()> {
        if self.dim != domain.dim() {
            return Err(Error::Dimension {
                expected: domain.dim(),
                got: self.dim,
            });
        }
        self.positions().try_for_each(|p| domain.check(p))
    }

    pub fn empirical(&self) -> AtomicMeasure {
        measures::empirical(self).expect("agent states are nonempty and finite")
    }

    /// Positions sorted lexicographically.
    fn sorted(&self) -> Vec<f64> {
        let mut rows: Vec<&[f64]> = self.positions().collect();
        rows.sort_by(|a, b| cmp_points(a, b));
        rows.concat()
    }
}

/// JSON form: an array of point arrays.
impl Serialize for AgentState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.positions())
    }
}

impl<'de> Deserialize<'de> for AgentState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let points = Vec::<Vec<f64>>::deserialize(d)?;
        AgentState::from_points(&points).map_err(serde::de::Error::custom)
    }
}

/// Shared control input `u`, broadcast to every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlInput(pub Vec<f64>);

impl ControlInput {
    pub fn zeros(p: usize) -> Self {
        ControlInput(vec![0.0; p])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

/// The control set `U = [-u_max, u_max]^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBox {
    pub dim: usize,
    pub u_max: f64,
}

impl ControlBox {
    pub fn new(dim: usize, u_max: f64) -> Result<Self> {
        if !(u_max >= 0.0 && u_max.is_finite()) {
            return Err(Error::Parameter {
                name: "u_max",
                reason: format!("must be nonnegative and finite, got {u_max}"),
            });
        }
        Ok(ControlBox { dim, u_max })
    }

    pub fn check(&self, u: &ControlInput) -> Result<()> {
        if u.0.len() != self.dim || u.0.iter().any(|v| !(v.abs() <= self.u_max)) {
            return Err(Error::Input { input: u.0.clone() });
        }
        Ok(())
    }

    /// Largest Euclidean norm of an admissible input.
    pub fn max_norm(&self) -> f64 {
        self.u_max * (self.dim as f64).sqrt()
    }

    /// Tensor grid with `res` points per axis, lexicographic order (last axis
    /// fastest).
    pub fn grid(&self, res: usize) -> Vec<ControlInput> {
        let ticks: Vec<f64> = if res <= 1 {
            vec![0.0]
        } else {
            (0..res)
                .map(|i| -self.u_max + 2.0 * self.u_max * i as f64 / (res - 1) as f64)
                .map(|v| v.clamp(-self.u_max, self.u_max))
                .collect()
        };
        let total = ticks.len().pow(self.dim as u32);
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.dim];
        for _ in 0..total {
            out.push(ControlInput(idx.iter().map(|&i| ticks[i]).collect()));
            for axis in (0..self.dim).rev() {
                idx[axis] += 1;
                if idx[axis] < ticks.len() {
                    break;
                }
                idx[axis] = 0;
            }
        }
        out
    }
}

/// Control sequence `u(0), ..., u(N-1)` with `N >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ControlInput>", into = "Vec<ControlInput>")]
pub struct ControlSequence(Vec<ControlInput>);

impl TryFrom<Vec<ControlInput>> for ControlSequence {
    type Error = Error;

    fn try_from(v: Vec<ControlInput>) -> Result<Self> {
        ControlSequence::new(v)
    }
}

impl From<ControlSequence> for Vec<ControlInput> {
    fn from(s: ControlSequence) -> Self {
        s.0
    }
}

impl ControlSequence {
    pub fn new(inputs: Vec<ControlInput>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Parameter {
                name: "horizon",
                reason: "a control sequence needs N >= 1 inputs".into(),
            });
        }
        Ok(ControlSequence(inputs))
    }

    pub fn zeros(p: usize, horizon: usize) -> Result<Self> {
        ControlSequence::new(vec![ControlInput::zeros(p); horizon])
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    pub fn inputs(&self) -> &[ControlInput] {
        &self.0
    }
}

/// Interaction rule of a zoo model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dynamics {
    /// `x_i+ = x_i + h M/(M-1) (mean - x_i) + u`; mean field
    /// `y -> y + h (m1(mu) - y) + u`. The self-exclusion factor makes the
    /// two differ by `O(1/M)`.
    LinearConsensus { h: f64 },
    /// Smoothed Hegselmann-Krause,
    /// `x_i+ = x_i + (h/M) sum_j phi_r(|x_j - x_i|)(x_j - x_i) + u`, with
    /// `phi_r(s) = (1 - (s/r)^2)^2` for `s < r` and zero beyond.
    BoundedConfidence { h: f64, radius: f64 },
    /// Discrete Cucker-Smale flocking on `(position, velocity)` pairs:
    /// `p+ = p + h v`, `v+ = v + (h/M) sum_j (1 + |p_j - p_i|^2)^(-beta) (v_j - v_i) + u`.
    CuckerSmale { h: f64, beta: f64 },
}

/// Stage cost of a zoo model. Every variant adds `lambda_u |u|^2`.
#[derive(Debug, Clone, PartialEq)]
pub enum StageCost {
    /// Population variance `(1/M) sum |x_i - mean|^2`.
    Variance { lambda_u: f64 },
    /// Bessel-corrected variance `1/(M-1) sum |x_i - mean|^2` at finite `M`,
    /// plain variance in the mean-field limit. Differs from its limit by
    /// `O(1/M)`.
    SampleVariance { lambda_u: f64 },
    /// Negative squared embedding norm `-(1/M^2) sum_ij k(x_i, x_j)`.
    KernelCohesion { lambda_u: f64, kernel: Kernel },
}

impl StageCost {
    pub fn variance(lambda_u: f64) -> Self {
        StageCost::Variance { lambda_u }
    }

    pub fn sample_variance(lambda_u: f64) -> Self {
        StageCost::SampleVariance { lambda_u }
    }

    pub fn kernel_cohesion(lambda_u: f64, kernel: Kernel) -> Self {
        StageCost::KernelCohesion { lambda_u, kernel }
    }

    pub fn lambda_u(&self) -> f64 {
        match self {
            StageCost::Variance { lambda_u }
            | StageCost::SampleVariance { lambda_u }
            | StageCost::KernelCohesion { lambda_u, .. } => *lambda_u,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StageCost::Variance { .. } => "variance",
            StageCost::SampleVariance { .. } => "sample_variance",
            StageCost::KernelCohesion { .. } => "kernel_cohesion",
        }
    }
}

/// A multiagent control system together with its mean-field limit.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    name: String,
    dynamics: Dynamics,
    cost: StageCost,
    state_box: StateBox,
    controls: ControlBox,
}

fn unit_interval(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Parameter {
            name,
            reason: format!("must lie in [0, 1], got {v}"),
        })
    }
}

fn nonnegative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter {
            name,
            reason: format!("must be nonnegative and finite, got {v}"),
        })
    }
}

impl SystemModel {
    /// Consensus with self-exclusion, control as a shared additive shift.
    /// Uses the variance cost with `lambda_u = 0.1` until replaced with
    /// [`SystemModel::with_cost`].
    pub fn linear_consensus(state_box: StateBox, h: f64, u_max: f64) -> Result<Self> {
        unit_interval("h", h)?;
        let p = state_box.dim();
        Ok(SystemModel {
            name: "linear_consensus".into(),
            dynamics: Dynamics::LinearConsensus { h },
            cost: StageCost::variance(0.1),
            controls: ControlBox::new(p, u_max)?,
            state_box,
        })
    }

    pub fn bounded_confidence(state_box: StateBox, h: f64, radius: f64, u_max: f64) -> Result<Self> {
        unit_interval("h", h)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter {
                name: "radius",
                reason: format!("must be positive, got {radius}"),
            });
        }
        let p = state_box.dim();
        Ok(SystemModel {
            name: "bounded_confidence".into(),
            dynamics: Dynamics::BoundedConfidence { h, radius },
            cost: StageCost::variance(0.1),
            controls: ControlBox::new(p, u_max)?,
            state_box,
        })
    }

    /// The box holds positions in its first half of coordinates and
    /// velocities in the second half; controls act on velocities.
    pub fn cucker_smale(state_box: StateBox, h: f64, beta: f64, u_max: f64) -> Result<Self> {
        unit_interval("h", h)?;
        nonnegative("beta", beta)?;
        if !state_box.dim().is_multiple_of(2) {
            return Err(Error::Parameter {
                name: "box",
                reason: "Cucker-Smale needs an even state dimension (position, velocity)".into(),
            });
        }
        let p = state_box.dim() / 2;
        Ok(SystemModel {
            name: "cucker_smale_discrete".into(),
            dynamics: Dynamics::CuckerSmale { h, beta },
            cost: StageCost::variance(0.1),
            controls: ControlBox::new(p, u_max)?,
            state_box,
        })
    }

    pub fn with_cost(mut self, cost: StageCost) -> Result<Self> {
        nonnegative("lambda_u", cost.lambda_u())?;
        if let StageCost::KernelCohesion { kernel, .. } = &cost {
            if kernel.domain() != &self.state_box {
                return Err(Error::Parameter {
                    name: "kernel",
                    reason: "cohesion kernel must live on the model's state box".into(),
                });
            }
        }
        self.cost = cost;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dynamics(&self) -> Dynamics {
        self.dynamics
    }

    pub fn cost(&self) -> &StageCost {
        &self.cost
    }

    pub fn state_box(&self) -> &StateBox {
        &self.state_box
    }

    pub fn controls(&self) -> ControlBox {
        self.controls
    }

    pub fn step_size(&self) -> f64 {
        match self.dynamics {
            Dynamics::LinearConsensus { h }
            | Dynamics::BoundedConfidence { h, .. }
            | Dynamics::CuckerSmale { h, .. } => h,
        }
    }

    /// Uniform bound `B_l` on `|l_M|`, from the box and `u_max`.
    pub fn cost_bound(&self) -> f64 {
        let control = self.cost.lambda_u() * self.controls.max_norm().powi(2);
        let max_var: f64 = self
            .state_box
            .lower()
            .iter()
            .zip(self.state_box.upper())
            .map(|(l, u)| (u - l) * (u - l) / 4.0)
            .sum();
        match &self.cost {
            StageCost::Variance { .. } => max_var + control,
            StageCost::SampleVariance { .. } => 2.0 * max_var + control,
            StageCost::KernelCohesion { kernel, .. } => kernel.bound() + control,
        }
    }

    fn check_inputs(&self, coords_in_box: Result<()>, u: &ControlInput) -> Result<()> {
        self.controls.check(u)?;
        coords_in_box
    }

    /// Advances every atom under the interaction field of the whole
    /// configuration. `finite_agents` is `Some(M)` on the microscopic path.
    fn advance(
        &self,
        atoms: &[f64],
        sorted: &[f64],
        sorted_w: &[f64],
        u: &[f64],
        finite_agents: Option<usize>,
    ) -> Vec<f64> {
        let d = self.state_box.dim();
        let mut out = atoms.to_vec();
        match self.dynamics {
            Dynamics::LinearConsensus { h } => {
                let mean = weighted_mean(d, sorted, sorted_w);
                let gain = match finite_agents {
                    Some(1) => 0.0,
                    Some(m) => h * (m as f64 / (m - 1) as f64),
                    None => h,
                };
                for y in out.chunks_exact_mut(d) {
                    for ((yi, mi), ui) in y.iter_mut().zip(&mean).zip(u) {
                        *yi += gain * (mi - *yi) + ui;
                    }
                }
            }
            Dynamics::BoundedConfidence { h, radius } => {
                let mut drift = vec![0.0; d];
                for y in out.chunks_exact_mut(d) {
                    drift.iter_mut().for_each(|v| *v = 0.0);
                    for (a, w) in sorted.chunks_exact(d).zip(sorted_w) {
                        let s2: f64 = a.iter().zip(y.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
                        let t = s2 / (radius * radius);
                        if t < 1.0 {
                            let phi = (1.0 - t) * (1.0 - t);
                            for ((dv, p), q) in drift.iter_mut().zip(a).zip(y.iter()) {
                                *dv += w * phi * (p - q);
                            }
                        }
                    }
                    for ((yi, dv), ui) in y.iter_mut().zip(&drift).zip(u) {
                        *yi += h * dv + ui;
                    }
                }
            }
            Dynamics::CuckerSmale { h, beta } => {
                let half = d / 2;
                let mut drift = vec![0.0; half];
                for y in out.chunks_exact_mut(d) {
                    drift.iter_mut().for_each(|v| *v = 0.0);
                    let (pos, vel) = y.split_at(half);
                    for (a, w) in sorted.chunks_exact(d).zip(sorted_w) {
                        let (pa, va) = a.split_at(half);
                        let r2: f64 = pa.iter().zip(pos).map(|(p, q)| (p - q) * (p - q)).sum();
                        let psi = (1.0 + r2).powf(-beta);
                        for ((dv, p), q) in drift.iter_mut().zip(va).zip(vel) {
                            *dv += w * psi * (p - q);
                        }
                    }
                    let old_vel = vel.to_vec();
                    let (pos, vel) = y.split_at_mut(half);
                    for (p, v) in pos.iter_mut().zip(&old_vel) {
                        *p += h * v;
                    }
                    for ((v, dv), ui) in vel.iter_mut().zip(&drift).zip(u) {
                        *v += h * dv + ui;
                    }
                }
            }
        }
        for y in out.chunks_exact_mut(d) {
            self.state_box.clamp_in_place(y);
        }
        out
    }

    /// Microscopic transition `f_M(x, u)`.
    pub fn step(&self, x: &AgentState, u: &ControlInput) -> Result<AgentState> {
        self.check_inputs(x.check_in(&self.state_box), u)?;
        let m = x.agents();
        let sorted = x.sorted();
        let w = vec![1.0 / m as f64; m];
        let coords = self.advance(x.coords(), &sorted, &w, u.as_slice(), Some(m));
        AgentState::new(x.dim(), coords)
    }

    /// Mean-field transition `f(mu, u)`: pushforward of `mu` under the drift
    /// field integrated against `mu`. Weights are carried over unchanged.
    pub fn step_meanfield(&self, mu: &AtomicMeasure, u: &ControlInput) -> Result<AtomicMeasure> {
        self.check_inputs(mu.check_in(&self.state_box), u)?;
        let (sorted, sorted_w) = mu.canonical();
        let coords = self.advance(mu.coords(), &sorted, &sorted_w, u.as_slice(), None);
        AtomicMeasure::new(mu.dim(), coords, mu.weights().to_vec())
    }

    /// Measure-level part of the stage cost (no control penalty), summed in
    /// canonical order.
    fn state_cost(&self, sorted: &[f64], sorted_w: &[f64]) -> f64 {
        let d = self.state_box.dim();
        match &self.cost {
            StageCost::Variance { .. } | StageCost::SampleVariance { .. } => {
                let mean = weighted_mean(d, sorted, sorted_w);
                sorted
                    .chunks_exact(d)
                    .zip(sorted_w)
                    .map(|(a, w)| {
                        w * a
                            .iter()
                            .zip(&mean)
                            .map(|(x, m)| (x - m) * (x - m))
                            .sum::<f64>()
                    })
                    .sum()
            }
            StageCost::KernelCohesion { kernel, .. } => {
                let canon = AtomicMeasure::new(d, sorted.to_vec(), sorted_w.to_vec())
                    .expect("canonical copy of a valid measure");
                -measures::kme_norm_sq(kernel, &canon).expect("atoms checked against the box")
            }
        }
    }

    /// Microscopic stage cost `l_M(x, u)`.
    pub fn stage_cost(&self, x: &AgentState, u: &ControlInput) -> Result<f64> {
        self.check_inputs(x.check_in(&self.state_box), u)?;
        let m = x.agents();
        let sorted = x.sorted();
        let w = vec![1.0 / m as f64; m];
        let base = self.state_cost(&sorted, &w);
        let base = match self.cost {
            StageCost::SampleVariance { .. } if m > 1 => base * (m as f64 / (m - 1) as f64),
            StageCost::SampleVariance { .. } => 0.0,
            _ => base,
        };
        Ok(base + self.cost.lambda_u() * u.norm_sq())
    }

    /// Mean-field stage cost `l(mu, u)`.
    pub fn stage_cost_meanfield(&self, mu: &AtomicMeasure, u: &ControlInput) -> Result<f64> {
        self.check_inputs(mu.check_in(&self.state_box), u)?;
        let (sorted, sorted_w) = mu.canonical();
        Ok(self.state_cost(&sorted, &sorted_w) + self.cost.lambda_u() * u.norm_sq())
    }

    /// States `x(0), ..., x(N)` driven by `useq`.
    pub fn trajectory(&self, x0: &AgentState, useq: &ControlSequence) -> Result<Vec<AgentState>> {
        let mut out = Vec::with_capacity(useq.horizon() + 1);
        out.push(x0.clone());
        for u in useq.inputs() {
            let next = self.step(out.last().expect("nonempty"), u)?;
            out.push(next);
        }
        // x0 itself is validated by the first step
        Ok(out)
    }

    /// `J_N^M(x0, u) = sum_{n < N} l_M(x(n), u(n))`.
    pub fn total_cost(&self, x0: &AgentState, useq: &ControlSequence) -> Result<f64> {
        let traj = self.trajectory(x0, useq)?;
        traj.iter()
            .zip(useq.inputs())
            .map(|(x, u)| self.stage_cost(x, u))
            .sum()
    }

    /// Free-text description with parameters, used by the CLI's model listing.
    pub fn describe(&self) -> String {
        let dynamics = match self.dynamics {
            Dynamics::LinearConsensus { h } => format!("h={h}"),
            Dynamics::BoundedConfidence { h, radius } => format!("h={h} radius={radius}"),
            Dynamics::CuckerSmale { h, beta } => format!("h={h} beta={beta}"),
        };
        format!(
            "{} [{}] u_max={} cost={}(lambda_u={})",
            self.name,
            dynamics,
            self.controls.u_max,
            self.cost.name(),
            self.cost.lambda_u()
        )
    }
}
