//! Finitely supported probability measures and their kernel mean embeddings.
//!
//! Every measure in this crate is an [`AtomicMeasure`]: a list of atoms in the
//! state box with nonnegative weights summing to one. Empirical measures of
//! agent configurations are the uniform-weight special case, and general
//! reference measures are approximated by a tensor-grid quantization
//! ([`AtomicMeasure::grid`]). With that representation every embedding
//! quantity reduces to a weighted Gram sum:
//!
//! ```text
//! <Pi(mu), Pi(nu)>  = sum_i sum_j w_i v_j k(x_i, y_j)
//! MMD(mu, nu)^2     = <Pi mu, Pi mu> - 2 <Pi mu, Pi nu> + <Pi nu, Pi nu>
//! ```

mod transport;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{clamped_sqrt, Kernel, StateBox};
use crate::systems::AgentState;

pub use transport::{assignment, wasserstein1, W1_MAX_ATOMS};

/// Allowed deviation of the total weight from one.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Gram sums with at least this many entries are split across threads.
const PAR_THRESHOLD: usize = 1 << 14;

/// Finitely supported probability measure `sum_i w_i delta_{x_i}`.
///
/// Coincident atoms are allowed and are never merged.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl AtomicMeasure {
    /// Builds a measure from flat row-major coordinates.
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter {
                name: "dim",
                reason: "must be positive".into(),
            });
        }
        if weights.is_empty() {
            return Err(Error::Invariant("a measure needs at least one atom".into()));
        }
        if coords.len() != dim * weights.len() {
            return Err(Error::Dimension {
                expected: dim * weights.len(),
                got: coords.len(),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invariant("atom coordinates must be finite".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Invariant("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Invariant(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(AtomicMeasure {
            dim,
            coords,
            weights,
        })
    }

    pub fn from_points(points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.len() != weights.len() {
            return Err(Error::Dimension {
                expected: points.len(),
                got: weights.len(),
            });
        }
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        AtomicMeasure::new(dim, coords, weights)
    }

    /// Uniform weights `1/n` on the given atoms.
    pub fn uniform(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) || coords.is_empty() {
            return Err(Error::Invariant(
                "uniform measure needs at least one complete atom".into(),
            ));
        }
        let n = coords.len() / dim;
        AtomicMeasure::new(dim, coords, vec![1.0 / n as f64; n])
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        AtomicMeasure::new(point.len(), point.to_vec(), vec![1.0])
    }

    /// Equal-weight tensor grid with `per_dim` cell midpoints along each axis
    /// of the box; the quantized uniform distribution on the box.
    pub fn grid(domain: &StateBox, per_dim: usize) -> Result<Self> {
        if per_dim == 0 {
            return Err(Error::Parameter {
                name: "per_dim",
                reason: "must be positive".into(),
            });
        }
        let d = domain.dim();
        let n = per_dim
            .checked_pow(d as u32)
            .ok_or_else(|| Error::Parameter {
                name: "per_dim",
                reason: "grid too large".into(),
            })?;
        let mut coords = Vec::with_capacity(n * d);
        let mut idx = vec![0usize; d];
        for _ in 0..n {
            for (axis, &i) in idx.iter().enumerate() {
                let (l, u) = (domain.lower()[axis], domain.upper()[axis]);
                coords.push(l + (u - l) * (i as f64 + 0.5) / per_dim as f64);
            }
            // odometer, last axis fastest
            for axis in (0..d).rev() {
                idx[axis] += 1;
                if idx[axis] < per_dim {
                    break;
                }
                idx[axis] = 0;
            }
        }
        AtomicMeasure::uniform(d, coords)
    }

    /// Convex combination `lambda * mu + (1 - lambda) * nu`, represented by
    /// concatenating the atom lists.
    pub fn mix(lambda: f64, mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Parameter {
                name: "lambda",
                reason: format!("must lie in [0, 1], got {lambda}"),
            });
        }
        if mu.dim != nu.dim {
            return Err(Error::Dimension {
                expected: mu.dim,
                got: nu.dim,
            });
        }
        let mut coords = mu.coords.clone();
        coords.extend_from_slice(&nu.coords);
        let weights = mu
            .weights
            .iter()
            .map(|w| lambda * w)
            .chain(nu.weights.iter().map(|w| (1.0 - lambda) * w))
            .collect();
        AtomicMeasure::new(mu.dim, coords, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn check_in(&self, domain: &StateBox) -> Result<()> {
        if self.dim != domain.dim() {
            return Err(Error::Dimension {
                expected: domain.dim(),
                got: self.dim,
            });
        }
        for a in self.atoms() {
            domain.check(a)?;
        }
        Ok(())
    }

    /// Weighted mean `sum_i w_i x_i`.
    pub fn mean(&self) -> Vec<f64> {
        weighted_mean(self.dim, &self.coords, &self.weights)
    }

    /// Atoms paired with weights, sorted lexicographically by atom then
    /// weight. Sums taken in this order do not depend on how the atoms were
    /// listed.
    pub(crate) fn canonical(&self) -> (Vec<f64>, Vec<f64>) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| {
            cmp_points(self.atom(i), self.atom(j))
                .then(self.weights[i].total_cmp(&self.weights[j]))
        });
        let mut coords = Vec::with_capacity(self.coords.len());
        let mut weights = Vec::with_capacity(self.len());
        for i in order {
            coords.extend_from_slice(self.atom(i));
            weights.push(self.weights[i]);
        }
        (coords, weights)
    }
}

/// Weighted mean computed as `x_0 + sum_i w_i (x_i - x_0)`, which is exact
/// when all atoms coincide.
pub(crate) fn weighted_mean(dim: usize, coords: &[f64], weights: &[f64]) -> Vec<f64> {
    let anchor = &coords[..dim];
    let mut m = vec![0.0; dim];
    for (a, w) in coords.chunks_exact(dim).zip(weights) {
        for ((mi, ai), ci) in m.iter_mut().zip(a).zip(anchor) {
            *mi += w * (ai - ci);
        }
    }
    m.iter_mut().zip(anchor).for_each(|(mi, ci)| *mi += ci);
    m
}

pub(crate) fn cmp_points(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightedAtom {
    atom: Vec<f64>,
    weight: f64,
}

/// Serialized as a JSON array of `{"atom": [..], "weight": w}` records.
impl Serialize for AtomicMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.atoms().zip(&self.weights).map(|(a, w)| WeightedAtom {
            atom: a.to_vec(),
            weight: *w,
        }))
    }
}

impl<'de> Deserialize<'de> for AtomicMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<WeightedAtom>::deserialize(d)?;
        let (points, weights): (Vec<_>, Vec<_>) =
            raw.into_iter().map(|r| (r.atom, r.weight)).unzip();
        AtomicMeasure::from_points(&points, weights).map_err(serde::de::Error::custom)
    }
}

/// Uniform measure on the agent positions, `(1/M) sum_m delta_{x_m}`.
pub fn empirical(x: &AgentState) -> Result<AtomicMeasure> {
    AtomicMeasure::uniform(x.dim(), x.coords().to_vec())
}

/// Finite-span RKHS element `f = sum_j c_j k(., z_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RkhsCombination {
    dim: usize,
    centers: Vec<f64>,
    coefficients: Vec<f64>,
}

impl RkhsCombination {
    pub fn new(centers: &[Vec<f64>], coefficients: Vec<f64>) -> Result<Self> {
        if centers.len() != coefficients.len() || centers.is_empty() {
            return Err(Error::Dimension {
                expected: centers.len(),
                got: coefficients.len(),
            });
        }
        let dim = centers[0].len();
        if centers.iter().any(|c| c.len() != dim) {
            return Err(Error::Invariant("centers must share one dimension".into()));
        }
        Ok(RkhsCombination {
            dim,
            centers: centers.concat(),
            coefficients,
        })
    }

    pub fn centers(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.centers.chunks_exact(self.dim)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    fn check_in(&self, domain: &StateBox) -> Result<()> {
        self.centers().try_for_each(|c| domain.check(c))
    }

    /// Pointwise value `f(z)`.
    pub fn eval(&self, k: &Kernel, z: &[f64]) -> Result<f64> {
        self.check_in(k.domain())?;
        k.domain().check(z)?;
        Ok(self
            .centers()
            .zip(&self.coefficients)
            .map(|(c, a)| a * k.eval_unchecked(c, z))
            .sum())
    }

    /// `<f, Pi(mu)>` computed coefficient-first, `sum_j c_j (Pi mu)(z_j)`.
    /// Equals [`integrate_rkhs`] by the reproducing property.
    pub fn inner_with_embedding(&self, k: &Kernel, mu: &AtomicMeasure) -> Result<f64> {
        self.check_in(k.domain())?;
        mu.check_in(k.domain())?;
        Ok(self
            .centers()
            .zip(&self.coefficients)
            .map(|(c, a)| {
                a * mu
                    .atoms()
                    .zip(mu.weights())
                    .map(|(x, w)| w * k.eval_unchecked(c, x))
                    .sum::<f64>()
            })
            .sum())
    }
}

/// `sum_i sum_j w_i v_j k(x_i, y_j)` with a fixed summation order, whatever
/// the thread count.
fn weighted_gram_sum(k: &Kernel, mu: &AtomicMeasure, nu: &AtomicMeasure) -> f64 {
    let row = |x: &[f64]| -> f64 {
        nu.atoms()
            .zip(nu.weights())
            .map(|(y, v)| v * k.eval_unchecked(x, y))
            .sum()
    };
    let rows: Vec<f64> = if mu.len() * nu.len() >= PAR_THRESHOLD {
        mu.coords.par_chunks_exact(mu.dim).map(row).collect()
    } else {
        mu.atoms().map(row).collect()
    };
    rows.iter().zip(mu.weights()).map(|(r, w)| w * r).sum()
}

fn check_pair(k: &Kernel, mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<()> {
    mu.check_in(k.domain())?;
    nu.check_in(k.domain())
}

/// Inner product of kernel mean embeddings `<Pi(mu), Pi(nu)>`.
pub fn kme_inner(k: &Kernel, mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<f64> {
    check_pair(k, mu, nu)?;
    Ok(weighted_gram_sum(k, mu, nu))
}

/// Embedding evaluated at a point, `(Pi mu)(z) = sum_i w_i k(z, x_i)`.
pub fn kme_eval(k: &Kernel, mu: &AtomicMeasure, z: &[f64]) -> Result<f64> {
    mu.check_in(k.domain())?;
    k.domain().check(z)?;
    Ok(mu
        .atoms()
        .zip(mu.weights())
        .map(|(x, w)| w * k.eval_unchecked(z, x))
        .sum())
}

/// `int f dmu = sum_i w_i f(x_i)` for a finite-span RKHS element.
pub fn integrate_rkhs(k: &Kernel, f: &RkhsCombination, mu: &AtomicMeasure) -> Result<f64> {
    f.check_in(k.domain())?;
    mu.check_in(k.domain())?;
    Ok(mu
        .atoms()
        .zip(mu.weights())
        .map(|(x, w)| {
            w * f
                .centers()
                .zip(f.coefficients())
                .map(|(c, a)| a * k.eval_unchecked(c, x))
                .sum::<f64>()
        })
        .sum())
}

/// Squared embedding norm `|Pi(mu)|^2`.
pub fn kme_norm_sq(k: &Kernel, mu: &AtomicMeasure) -> Result<f64> {
    mu.check_in(k.domain())?;
    Ok(weighted_gram_sum(k, mu, mu))
}

/// Maximum mean discrepancy `|Pi(mu) - Pi(nu)|_k` in closed form.
pub fn mmd(k: &Kernel, mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<f64> {
    check_pair(k, mu, nu)?;
    let mm = weighted_gram_sum(k, mu, mu);
    let nn = weighted_gram_sum(k, nu, nu);
    let mn = weighted_gram_sum(k, mu, nu);
    clamped_sqrt(mm - 2.0 * mn + nn)
}

/// True iff both measures put the same mass on the same locations, after
/// merging atoms that agree within `tol` in every coordinate.
pub fn measure_equal(mu: &AtomicMeasure, nu: &AtomicMeasure, tol: f64) -> bool {
    if mu.dim != nu.dim {
        return false;
    }
    let mut reps: Vec<&[f64]> = Vec::new();
    let mut mass: Vec<[f64; 2]> = Vec::new();
    for (side, m) in [mu, nu].into_iter().enumerate() {
        for (a, w) in m.atoms().zip(m.weights()) {
            let slot = reps.iter().position(|r| {
                r.iter().zip(a).all(|(p, q)| (p - q).abs() <= tol)
            });
            let slot = slot.unwrap_or_else(|| {
                reps.push(a);
                mass.push([0.0, 0.0]);
                reps.len() - 1
            });
            mass[slot][side] += w;
        }
    }
    mass.iter().all(|[a, b]| (a - b).abs() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k1() -> Kernel {
        Kernel::gaussian(1.0, StateBox::unit(1).unwrap()).unwrap()
    }

    #[test]
    fn empirical_is_uniform_without_dedup() {
        let x = AgentState::from_points(&[vec![0.2], vec![0.8]]).unwrap();
        let mu = empirical(&x).unwrap();
        assert_eq!(mu.coords(), &[0.2, 0.8]);
        assert_eq!(mu.weights(), &[0.5, 0.5]);

        let y = AgentState::from_points(&[vec![0.5], vec![0.5]]).unwrap();
        let nu = empirical(&y).unwrap();
        assert_eq!(nu.len(), 2);
        assert_eq!(nu.weights(), &[0.5, 0.5]);

        let xp = AgentState::from_points(&[vec![0.8], vec![0.2]]).unwrap();
        assert!(measure_equal(&mu, &empirical(&xp).unwrap(), 0.0));
    }

    #[test]
    fn invariants_enforced() {
        assert!(AtomicMeasure::new(1, vec![0.1, 0.2], vec![0.5, 0.6]).is_err());
        assert!(AtomicMeasure::new(1, vec![0.1, 0.2], vec![1.5, -0.5]).is_err());
        assert!(AtomicMeasure::new(1, vec![], vec![]).is_err());
        assert!(AtomicMeasure::new(2, vec![0.1, 0.2, 0.3], vec![1.0]).is_err());
        let k = k1();
        let outside = AtomicMeasure::dirac(&[1.2]).unwrap();
        assert!(matches!(
            kme_inner(&k, &outside, &outside),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn kme_examples() {
        let k = k1();
        let d0 = AtomicMeasure::dirac(&[0.0]).unwrap();
        let d1 = AtomicMeasure::dirac(&[1.0]).unwrap();
        let e = (-0.5f64).exp();
        assert_eq!(kme_inner(&k, &d0, &d0).unwrap(), 1.0);
        assert!((kme_inner(&k, &d0, &d1).unwrap() - e).abs() < 1e-15);

        let two = AtomicMeasure::uniform(1, vec![0.0, 1.0]).unwrap();
        assert!((kme_eval(&k, &two, &[0.0]).unwrap() - (1.0 + e) / 2.0).abs() < 1e-15);
        assert!((kme_eval(&k, &d1, &[0.3]).unwrap() - k.eval(&[0.3], &[1.0]).unwrap()).abs() == 0.0);

        let skew = AtomicMeasure::new(1, vec![0.0, 1.0], vec![0.3, 0.7]).unwrap();
        let z = [0.42];
        let oracle = 0.3 * k.eval(&z, &[0.0]).unwrap() + 0.7 * k.eval(&z, &[1.0]).unwrap();
        assert!((kme_eval(&k, &skew, &z).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn rkhs_integration_examples() {
        let k = k1();
        let f = RkhsCombination::new(&[vec![0.25]], vec![1.0]).unwrap();
        let d = AtomicMeasure::dirac(&[0.75]).unwrap();
        assert_eq!(
            integrate_rkhs(&k, &f, &d).unwrap(),
            k.eval(&[0.25], &[0.75]).unwrap()
        );

        let g = RkhsCombination::new(&[vec![0.0], vec![1.0]], vec![1.0, -1.0]).unwrap();
        let mu = AtomicMeasure::uniform(1, vec![0.0, 1.0]).unwrap();
        assert!(integrate_rkhs(&k, &g, &mu).unwrap().abs() < 1e-15);
        assert!(g.inner_with_embedding(&k, &mu).unwrap().abs() < 1e-15);
        assert!((g.eval(&k, &[0.0]).unwrap() - (1.0 - (-0.5f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn mmd_examples() {
        let k = k1();
        let mu = AtomicMeasure::uniform(1, vec![0.0, 1.0]).unwrap();
        assert_eq!(mmd(&k, &mu, &mu.clone()).unwrap(), 0.0);

        let dx = AtomicMeasure::dirac(&[0.1]).unwrap();
        let dy = AtomicMeasure::dirac(&[0.7]).unwrap();
        assert!((mmd(&k, &dx, &dy).unwrap() - k.metric(&[0.1], &[0.7]).unwrap()).abs() < 1e-15);

        // brute-force double sum over the three Gram blocks
        let nu = AtomicMeasure::dirac(&[0.5]).unwrap();
        let g = |a: f64, b: f64| (-(a - b) * (a - b) / 2.0f64).exp();
        let mm = 0.25 * (g(0.0, 0.0) + g(0.0, 1.0) + g(1.0, 0.0) + g(1.0, 1.0));
        let mn = 0.5 * (g(0.0, 0.5) + g(1.0, 0.5));
        let oracle = (mm - 2.0 * mn + 1.0).sqrt();
        assert!((mmd(&k, &mu, &nu).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn measure_equal_examples() {
        let mu = AtomicMeasure::new(1, vec![0.1, 0.5, 0.9], vec![0.2, 0.3, 0.5]).unwrap();
        assert!(measure_equal(&mu, &mu.clone(), 1e-12));
        let perm = AtomicMeasure::new(1, vec![0.9, 0.1, 0.5], vec![0.5, 0.2, 0.3]).unwrap();
        assert!(measure_equal(&mu, &perm, 1e-12));
        let tol = 1e-3;
        let off = AtomicMeasure::new(1, vec![0.1, 0.5, 0.9], vec![0.202, 0.298, 0.5]).unwrap();
        assert!(!measure_equal(&mu, &off, tol));
        // split atom merges logically
        let split =
            AtomicMeasure::new(1, vec![0.1, 0.5, 0.5, 0.9], vec![0.2, 0.1, 0.2, 0.5]).unwrap();
        assert!(measure_equal(&mu, &split, 1e-12));
    }

    #[test]
    fn grid_quantization() {
        let b = StateBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let g = AtomicMeasure::grid(&b, 4).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.atom(0), &[0.125, -0.75]);
        assert_eq!(g.atom(1), &[0.125, -0.25]);
        assert!(g.check_in(&b).is_ok());
        let m = g.mean();
        assert!((m[0] - 0.5).abs() < 1e-15 && m[1].abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let mu = AtomicMeasure::new(2, vec![0.1, 0.2, 0.3, 0.4], vec![0.25, 0.75]).unwrap();
        let s = serde_json::to_string(&mu).unwrap();
        assert_eq!(
            s,
            r#"[{"atom":[0.1,0.2],"weight":0.25},{"atom":[0.3,0.4],"weight":0.75}]"#
        );
        let back: AtomicMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, mu);
        assert!(serde_json::from_str::<AtomicMeasure>(r#"[{"atom":[0.1],"weight":0.5}]"#).is_err());
        assert!(serde_json::from_str::<AtomicMeasure>("[]").is_err());
    }

    #[test]
    fn mixture_weights() {
        let mu = AtomicMeasure::dirac(&[0.1]).unwrap();
        let nu = AtomicMeasure::uniform(1, vec![0.2, 0.3]).unwrap();
        let m = AtomicMeasure::mix(0.4, &mu, &nu).unwrap();
        assert_eq!(m.weights(), &[0.4, 0.3, 0.3]);
        assert!(AtomicMeasure::mix(1.2, &mu, &nu).is_err());
    }
}
