//! Stochastic H∞-norm of linear systems with multiplicative noise,
//!
//! ```text
//! dx = (Ax + Bu) dt + Σⱼ (N_{x,j} x + N_{u,j} u) dwⱼ,    y = Cx + Du,
//! ```
//!
//! computed by bisection over `γ` with Newton's method on the parametrized
//! Riccati equation `R_γ(X) = 0` deciding each level.
//!
//! ```
//! use stochinf::{stoch_hinf_norm, NormOptions, StochasticSystem};
//!
//! let sys = StochasticSystem::scalar(-1.0, 1.0, 1.0, 1.0, 0.0);
//! let report = stoch_hinf_norm(&sys, &NormOptions::with_tol(1e-6)).unwrap();
//! assert!((report.norm - 2.0).abs() < 1e-5);
//! ```

pub mod cli;
pub mod error;
pub mod glyap;
pub mod hinf;
pub mod io;
pub mod linalg;
pub mod operators;
pub mod problems;
pub mod riccati;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use hinf::{det_hinf_norm, profile, stoch_hinf_norm, NormOptions, NormReport};
pub use linalg::{Matrix, SymMatrix};
pub use operators::{is_ms_stable, StochasticSystem};
pub use problems::{heat_system, mc_norm_lower_bound, random_system};
pub use riccati::{newton_solve, NewtonOptions, NewtonOutcome, NewtonStatus, RiccatiProblem};
