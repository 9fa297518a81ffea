//! Invariant-distribution approximation for Feller processes.
//!
//! The library simulates decreasing-step numerical schemes (Euler, Milstein,
//! censored-jump Euler) for mean-reverting diffusions and jump diffusions and
//! accumulates the weighted empirical measures
//!
//! ```text
//! nu_n(dx) = (1/H_n) * sum_{k=1..n} eta_k * delta_{X_{Gamma_{k-1}}}(dx)
//! ```
//!
//! whose almost-sure weak limits are invariant distributions of the underlying
//! process. Alongside the simulators it ships a verification toolkit for the
//! hypotheses that drive that convergence: step/weight summability, recursive
//! Lyapunov mean-reversion controls, jump-moment bounds and the exponential
//! Laplace-transform bound.
//!
//! Module map:
//! - [`model`]: coefficient fields, Lyapunov apparatus, generators, catalog
//! - [`schedules`]: step/weight sequences and their summability checkers
//! - [`schemes`]: one-step transitions and the chain driver
//! - [`empirical`]: streaming weighted empirical measure and quantile sketch
//! - [`verify`]: hypothesis checkers and constants
//! - [`oracles`]: independent reference computations (stationary laws, moments)

pub mod empirical;
pub mod error;
pub mod kahan;
pub mod linalg;
pub mod model;
pub mod oracles;
pub mod quad;
pub mod schedules;
pub mod schemes;
pub mod verify;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
