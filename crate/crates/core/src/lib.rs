//! Kernel regression in reproducing kernel Hilbert spaces.
//!
//! The crate covers three estimators of a regression function and the
//! machinery needed to compare them in the kernel norm:
//!
//! - [`estimator`]: the ridge (sample average) estimator `f̂_n`, its Gaussian
//!   process form, RKHS norms and evaluations of kernel expansions.
//! - [`fredholm`]: the deterministic regularized target `f_λ`, obtained by a
//!   Nyström discretization of `(λ + K) w_λ = f₀`.
//! - [`auxiliary`]: the unbiased denoising estimator `f̃_n` and the exact
//!   identities linking it to `f̂_n`.
//!
//! [`experiments`] drives seeded Monte Carlo replications over these objects
//! and fits convergence rates; [`linalg`] holds the dense symmetric solvers
//! and the Loewner-order checks everything else relies on.
//!
//! All kernel expansions store coefficients `a_i` such that
//! `f(x) = Σ a_i k(x, c_i)`. For the ridge estimator this means `a = ŵ / n`,
//! so no sample-size factor travels alongside an expansion.

pub mod auxiliary;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod fredholm;
pub mod kernels;
pub mod linalg;

pub use error::{Error, Result};
pub use estimator::{Dataset, KernelExpansion};
pub use kernels::{KernelFamily, KernelSpec};

/// A point in the design space `R^d`.
pub type Point = Vec<f64>;
