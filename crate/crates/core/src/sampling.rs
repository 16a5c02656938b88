//! Seeded random streams and samplers for states, controls and measures.
//!
//! Every sample owns its own ChaCha stream, addressed by
//! `(master seed, tag, group, index)`, so results do not depend on how work
//! is split across threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kernels::StateBox;
use crate::measures::AtomicMeasure;
use crate::systems::{AgentState, ControlBox, ControlInput, ControlSequence};

/// Every fifth sampled state is clustered.
pub const CLUSTER_PERIOD: u64 = 5;

/// Half-width of a clustered state, relative to the box side length.
pub const CLUSTER_RADIUS: f64 = 0.05;

/// Experiment tags keep the streams of different diagnostics apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Tag {
    OneStep = 1,
    TrajectoryBound = 2,
    Cost = 3,
    StageCost = 4,
    Embedding = 5,
    Lipschitz = 6,
    Rdp = 7,
    Simulate = 8,
    Constants = 9,
}

/// Independent generator for one work item.
pub fn stream(master: u64, tag: Tag, group: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ (tag as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream((group << 32) | (index & 0xFFFF_FFFF));
    rng
}

pub fn uniform_point<R: Rng>(rng: &mut R, domain: &StateBox) -> Vec<f64> {
    domain
        .lower()
        .iter()
        .zip(domain.upper())
        .map(|(l, u)| l + (u - l) * rng.random::<f64>())
        .collect()
}

/// `M` i.i.d. uniform agents.
pub fn uniform_state<R: Rng>(rng: &mut R, domain: &StateBox, agents: usize) -> AgentState {
    let coords = (0..agents).flat_map(|_| uniform_point(rng, domain)).collect();
    AgentState::new(domain.dim(), coords).expect("at least one agent")
}

/// All agents within a small cube around a uniform center, clamped to the
/// box.
pub fn clustered_state<R: Rng>(rng: &mut R, domain: &StateBox, agents: usize) -> AgentState {
    let center = uniform_point(rng, domain);
    let mut coords = Vec::with_capacity(agents * domain.dim());
    for _ in 0..agents {
        let mut p: Vec<f64> = center
            .iter()
            .zip(domain.lower().iter().zip(domain.upper()))
            .map(|(c, (l, u))| c + CLUSTER_RADIUS * (u - l) * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        domain.clamp_in_place(&mut p);
        coords.extend(p);
    }
    AgentState::new(domain.dim(), coords).expect("at least one agent")
}

/// The diagnostic state distribution: uniform, except that every
/// [`CLUSTER_PERIOD`]-th sample index is clustered.
pub fn sample_state<R: Rng>(rng: &mut R, domain: &StateBox, agents: usize, index: u64) -> AgentState {
    if index % CLUSTER_PERIOD == CLUSTER_PERIOD - 1 {
        clustered_state(rng, domain, agents)
    } else {
        uniform_state(rng, domain, agents)
    }
}

pub fn sample_control<R: Rng>(rng: &mut R, controls: &ControlBox) -> ControlInput {
    ControlInput(
        (0..controls.dim)
            .map(|_| (controls.u_max * (2.0 * rng.random::<f64>() - 1.0)).clamp(-controls.u_max, controls.u_max))
            .collect(),
    )
}

pub fn sample_controls<R: Rng>(rng: &mut R, controls: &ControlBox, horizon: usize) -> ControlSequence {
    ControlSequence::new((0..horizon).map(|_| sample_control(rng, controls)).collect())
        .expect("horizon >= 1")
}

/// `n` atoms uniform in the box with weights drawn uniformly and normalized.
pub fn random_measure<R: Rng>(rng: &mut R, domain: &StateBox, n: usize) -> AtomicMeasure {
    let coords: Vec<f64> = (0..n).flat_map(|_| uniform_point(rng, domain)).collect();
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    AtomicMeasure::new(domain.dim(), coords, normalize(&raw)).expect("valid random measure")
}

/// Rescales positive weights to sum to one, up to round-off.
pub fn normalize(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // push the residual into the largest weight
    let residual = 1.0 - w.iter().sum::<f64>();
    if let Some(max) = w.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += residual;
    }
    w
}

/// `m` i.i.d. draws from a reference measure, as an empirical measure.
pub fn draw_from<R: Rng>(rng: &mut R, reference: &AtomicMeasure, m: usize) -> AtomicMeasure {
    let cdf: Vec<f64> = reference
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let mut coords = Vec::with_capacity(m * reference.dim());
    for _ in 0..m {
        let t = rng.random::<f64>() * cdf[cdf.len() - 1];
        let i = cdf.partition_point(|c| *c <= t).min(cdf.len() - 1);
        coords.extend_from_slice(reference.atom(i));
    }
    AtomicMeasure::uniform(reference.dim(), coords).expect("m >= 1")
}

/// Uniformly random permutation of `0..n`.
pub fn permutation<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = stream(7, Tag::OneStep, 1, 2).random();
        let b: f64 = stream(7, Tag::OneStep, 1, 2).random();
        let c: f64 = stream(7, Tag::OneStep, 1, 3).random();
        let d: f64 = stream(7, Tag::Cost, 1, 2).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn samples_stay_in_box() {
        let b = StateBox::new(vec![-1.0, 0.0], vec![0.0, 2.0]).unwrap();
        let mut rng = stream(1, Tag::OneStep, 0, 0);
        for i in 0..20 {
            let x = sample_state(&mut rng, &b, 9, i);
            assert!(x.check_in(&b).is_ok());
        }
        let cb = ControlBox::new(3, 0.5).unwrap();
        for _ in 0..20 {
            assert!(cb.check(&sample_control(&mut rng, &cb)).is_ok());
        }
    }

    #[test]
    fn clustered_states_are_tight() {
        let b = StateBox::unit(1).unwrap();
        let mut rng = stream(3, Tag::OneStep, 0, 0);
        let x = clustered_state(&mut rng, &b, 50);
        let (lo, hi) = x
            .coords()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        assert!(hi - lo <= 2.0 * CLUSTER_RADIUS + 1e-15);
    }

    #[test]
    fn normalized_weights_sum_to_one() {
        let w = normalize(&[0.3, 0.7, 1.1, 0.05]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn draws_land_on_reference_atoms() {
        let r = AtomicMeasure::new(1, vec![0.1, 0.5], vec![0.0, 1.0]).unwrap();
        let mut rng = stream(4, Tag::Embedding, 0, 0);
        let s = draw_from(&mut rng, &r, 10);
        assert!(s.coords().iter().all(|v| *v == 0.5));
    }
}
