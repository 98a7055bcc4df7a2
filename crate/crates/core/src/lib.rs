//! Computable ratio bounds for finite-horizon approximate dynamic programming.
//!
//! The crate is organised around a generic finite-horizon decision problem
//! ([`horizon`]) and the machinery that certifies an approximate scheme
//! against the unknown optimum ([`bound`]). Two applications sit on top:
//!
//! - [`lqg`] and [`learn`]: a double-integrator robot steered by an LQG
//!   controller, with per-stage quadratic regressors imitating the exact
//!   expected-value-to-go.
//! - [`submod`] and [`coverage`]: greedy maximisation of monotone set and
//!   string submodular objectives, with the classical, greedy-curvature and
//!   top-H ratio bounds, applied to multi-agent sensor placement.
//!
//! Every stochastic routine takes an explicit `u64` seed; see [`seed`].

pub mod bound;
pub mod coverage;
pub mod horizon;
pub mod learn;
pub mod lqg;
pub mod seed;
pub mod submod;

pub use bound::{AdpScheme, BoundError, BoundReport};
pub use horizon::{Direction, HorizonError, HorizonProblem, Policy, Trajectory};
