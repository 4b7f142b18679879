//! Federated saddle-point optimization simulator.
//!
//! The crate evolves joint primal-dual points `z = (x, y)` under five
//! federated algorithms (Minibatch Mirror Descent, Minibatch Mirror-prox,
//! FedAvg-S, SCAFFOLD-S and SCAFFOLD-Catalyst-S) on a family of quadratic
//! strongly-convex-concave problems whose optimum and proximal operator are
//! known in closed form. Every run is reproducible from a 64-bit seed.
//!
//! Module map:
//! - [`point`] and [`problem`]: point arithmetic, gradient-mapping oracles,
//!   query noise, duality gap.
//! - [`testbed`]: quadratic instance generation and analytic oracles.
//! - [`algorithms`]: the local-update framework engine and the algorithms
//!   built on it.
//! - [`metrics`]: per-iteration diagnostics and the trace row schema.
//! - [`harness`]: experiment configs, sweeps, CSV persistence and the
//!   verification suites.

pub mod algorithms;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod point;
pub mod problem;
pub mod rng;
pub mod testbed;

pub use error::{Error, Result};
pub use point::SaddlePoint;
pub use problem::{FederatedProblem, NoisyOracle, ProblemConstants};
pub use testbed::TestbedInstance;
