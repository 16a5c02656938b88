//! Kernel mean embeddings and mean-field limits of discrete-time multiagent
//! control systems.
//!
//! A population of `M` agents with positions `x = (x_1, ..., x_M)` is
//! represented, for every purpose that does not depend on agent labels, by
//! its empirical measure `mu_hat[x] = (1/M) sum_m delta_{x_m}`. Embedding
//! that measure into the RKHS of a bounded kernel `k` turns the space of
//! populations of all sizes into one metric space, with the maximum mean
//! discrepancy (MMD) as distance. Mean-field limits of dynamics, costs and
//! feedback maps are then statements about uniform convergence in that
//! metric, which this crate checks numerically on model systems whose limit
//! is known in closed form.
//!
//! * [`kernels`]: bounded kernels on a box, Gram matrices, kernel metric.
//! * [`measures`]: atomic measures, embeddings, MMD, exact 1-Wasserstein.
//! * [`systems`]: finite-population dynamics and costs, the model zoo.
//! * [`meanfield`]: limit dynamics and costs, convergence diagnostics,
//!   Lipschitz estimates.
//! * [`rdp`]: relaxed dynamic programming certificates.
//!
//! ```
//! use kmfl::kernels::{Kernel, StateBox};
//! use kmfl::measures::{mmd, AtomicMeasure};
//!
//! let k = Kernel::gaussian(0.5, StateBox::unit(1)?)?;
//! let mu = AtomicMeasure::uniform(1, vec![0.1, 0.4, 0.9])?;
//! let nu = AtomicMeasure::dirac(&[0.5])?;
//! assert!(mmd(&k, &mu, &nu)? > 0.0);
//! assert_eq!(mmd(&k, &mu, &mu)?, 0.0);
//! # Ok::<(), kmfl::Error>(())
//! ```

// `!(a < b)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kernels;
pub mod meanfield;
pub mod measures;
pub mod rdp;
pub mod sampling;
pub mod systems;

pub use error::{Error, Result};
