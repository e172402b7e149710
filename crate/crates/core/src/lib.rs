//! Convex risk functionals of McKean-Vlasov diffusions.
//!
//! The crate evaluates the functional
//!
//! ```text
//! rho^g_s(F) = esssup_Q ( E^Q[F | F_s] - E^Q[ int_s^1 g(t, q^Q(t), X(t), mu(t)) dt | F_s ] )
//! ```
//!
//! of a terminal functional `F(X(1), mu(1))` of an interacting particle
//! approximation of a McKean-Vlasov SDE, together with the zero-noise control
//! problems that arise as its small-noise limits.
//!
//! * [`convex`]: running costs, conjugates, truncations and envelopes.
//! * [`particles`]: seeded Euler-Maruyama simulation of the particle system,
//!   empirical measures and exact `W2`.
//! * [`rho`]: three independent estimators of `rho^g` (log-mean-exp,
//!   backward regression, dual control lower bound).
//! * [`limit`]: controlled ODEs, action maximization, rate function and the
//!   measure-flow value with random initial law.
//! * [`experiments`]: config-driven harness producing machine-readable
//!   reports.

pub mod convex;
pub mod error;
pub mod experiments;
pub mod limit;
pub mod optim;
pub mod particles;
pub mod rho;
pub mod rng;

pub use error::{Error, Result};
