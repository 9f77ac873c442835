//! Optimal transport particle filtering.
//!
//! The crate learns, at every filtering step, the transport map that carries the
//! forecast (prior) ensemble onto the posterior. The map is the maximizer of a
//! min-max problem over an input-convex potential `f(x; y)` and a residual network
//! `T(x; y)`; see [`engine`]. Around it sit the pieces needed to benchmark it:
//!
//! * [`nn`]: the two networks, hand-written backward passes, ADAM.
//! * [`ssm`]: the benchmark state-space model and its simulation.
//! * [`filters`]: ensemble Kalman filter and SIR particle filter baselines.
//! * [`oracles`]: Kalman recursion, grid Bayes filter, closed-form Gaussian OT map.
//! * [`metrics`]: MSE, bounded-Lipschitz distance, bimodality and stability probes.
//! * [`runner`]: one stepping interface over all particle filters.
//! * [`harness`]: configuration, Monte Carlo replicas and CSV/JSON output.

pub mod engine;
pub mod ensemble;
pub mod error;
pub mod filters;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod oracles;
pub mod rng;
pub mod runner;
pub mod ssm;

pub use ensemble::Ensemble;
pub use error::{Error, Result};
pub use ssm::{ModelSpec, ObsKind, Trajectory};
