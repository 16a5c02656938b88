//! Bounded kernels on an axis-aligned box and the kernel (semi)metric they
//! induce.
//!
//! Every kernel here lives on a [`StateBox`], which plays the role of the
//! compact state space. The shipped families are
//!
//! * Gaussian, `exp(-|x - y|^2 / (2 sigma^2))`,
//! * inverse multiquadric, `c / sqrt(c^2 + |x - y|^2)`,
//! * augmented, a Gaussian plus `lambda_poly * (1 + x.y)^2`.
//!
//! Gaussian and inverse multiquadric kernels are characteristic on compact
//! subsets of `R^d` (Sriperumbudur, Fukumizu and Lanckriet, 2011). The
//! augmented kernel is characteristic as well because its Gaussian part is,
//! and its polynomial part puts the coordinate functions and their squares
//! into the RKHS, which makes means and variances MMD-Lipschitz.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for positive-semidefiniteness checks and radicand clamping.
pub const EPS_PSD: f64 = 1e-9;

/// Axis-aligned box `[lower, upper]` in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct StateBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for StateBox {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        StateBox::new(raw.lower, raw.upper)
    }
}

impl From<StateBox> for RawBox {
    fn from(b: StateBox) -> Self {
        RawBox {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl StateBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::Parameter {
                name: "box",
                reason: "dimension must be positive".into(),
            });
        }
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        // `!(a < b)` also rejects NaN bounds.
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !u.is_finite() || !l.is_finite()) {
            return Err(Error::Parameter {
                name: "box",
                reason: "lower < upper must hold componentwise with finite bounds".into(),
            });
        }
        Ok(StateBox { lower, upper })
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        StateBox::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !self.contains(x) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        Ok(())
    }

    /// Componentwise projection onto the box.
    pub fn clamp_in_place(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest Euclidean norm of a point in the box.
    pub fn max_norm(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let m = l.abs().max(u.abs());
                m * m
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Kernel family with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFamily {
    Gaussian { bandwidth: f64 },
    InverseMultiquadric { scale: f64 },
    Augmented { bandwidth: f64, lambda_poly: f64 },
}

/// A bounded symmetric positive-semidefinite kernel on a [`StateBox`].
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    domain: StateBox,
    bound: f64,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter {
            name,
            reason: format!("must be positive and finite, got {v}"),
        })
    }
}

impl Kernel {
    pub fn new(family: KernelFamily, domain: StateBox) -> Result<Self> {
        let bound = match family {
            KernelFamily::Gaussian { bandwidth } => {
                positive("bandwidth", bandwidth)?;
                1.0
            }
            KernelFamily::InverseMultiquadric { scale } => {
                positive("scale", scale)?;
                1.0
            }
            KernelFamily::Augmented {
                bandwidth,
                lambda_poly,
            } => {
                positive("bandwidth", bandwidth)?;
                if !(lambda_poly >= 0.0 && lambda_poly.is_finite()) {
                    return Err(Error::Parameter {
                        name: "lambda_poly",
                        reason: format!("must be nonnegative and finite, got {lambda_poly}"),
                    });
                }
                // |1 + x.y| <= 1 + R^2 by Cauchy-Schwarz.
                let r = domain.max_norm();
                let p = 1.0 + r * r;
                1.0 + lambda_poly * p * p
            }
        };
        Ok(Kernel {
            family,
            domain,
            bound,
        })
    }

    pub fn gaussian(bandwidth: f64, domain: StateBox) -> Result<Self> {
        Kernel::new(KernelFamily::Gaussian { bandwidth }, domain)
    }

    pub fn inverse_multiquadric(scale: f64, domain: StateBox) -> Result<Self> {
        Kernel::new(KernelFamily::InverseMultiquadric { scale }, domain)
    }

    pub fn augmented(bandwidth: f64, lambda_poly: f64, domain: StateBox) -> Result<Self> {
        Kernel::new(
            KernelFamily::Augmented {
                bandwidth,
                lambda_poly,
            },
            domain,
        )
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn domain(&self) -> &StateBox {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// `sup |k(x, y)|` over the domain.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `k(x, y)` with domain checks on both arguments.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.domain.check(x)?;
        self.domain.check(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    /// `k(x, y)` without domain checks. Callers validate points once per
    /// batch. The formula is symmetric term by term, so swapping the
    /// arguments gives a bit-identical result.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let sq = sq_dist(x, y);
        match self.family {
            KernelFamily::Gaussian { bandwidth } => (-sq / (2.0 * bandwidth * bandwidth)).exp(),
            KernelFamily::InverseMultiquadric { scale } => scale / (scale * scale + sq).sqrt(),
            KernelFamily::Augmented {
                bandwidth,
                lambda_poly,
            } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                let p = 1.0 + dot;
                (-sq / (2.0 * bandwidth * bandwidth)).exp() + lambda_poly * p * p
            }
        }
    }

    /// Gram matrix `G[i][j] = k(xs[i], ys[j])`.
    pub fn gram(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        for p in xs.iter().chain(ys) {
            self.domain.check(p)?;
        }
        Ok(xs
            .iter()
            .map(|x| ys.iter().map(|y| self.eval_unchecked(x, y)).collect())
            .collect())
    }

    /// Kernel metric `d_k(x, y) = |k(., x) - k(., y)|` in the RKHS.
    pub fn metric(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.domain.check(x)?;
        self.domain.check(y)?;
        self.metric_unchecked(x, y)
    }

    pub(crate) fn metric_unchecked(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        // (k(x,x) + k(y,y)) is commutative, so the result is symmetric bit for bit
        let r = (self.eval_unchecked(x, x) + self.eval_unchecked(y, y)) - 2.0 * self.eval_unchecked(x, y);
        clamped_sqrt(r)
    }
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Square root of a squared RKHS norm, clamping round-off in
/// `[-EPS_PSD, 0)` to zero.
pub(crate) fn clamped_sqrt(radicand: f64) -> Result<f64> {
    if radicand >= 0.0 {
        Ok(radicand.sqrt())
    } else if radicand >= -EPS_PSD {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!(
            "squared RKHS norm {radicand:e} is negative beyond tolerance; kernel is not PSD"
        )))
    }
}
