//! Evaluation: ensemble MSE, the bounded-Lipschitz distance between empirical
//! measures, bimodality diagnostics, the optimization-gap inequality and the
//! stability probe.

mod bl;
mod gap;
mod mse;
mod record;
mod stability;

pub use bl::{bl_distance, is_feasible, BLProblem, BLSolution, DEFAULT_BL_TOLERANCE, DEFAULT_SUPPORT_CAP};
pub use gap::{gap_inequality_check, gaussian_gap_samples, icnn_conjugate, Conjugate, GapCheck};
pub use mse::{bimodality_balance, ensemble_sq_error, ks_distance_to_grid, mse, Phi};
pub use record::{MetricRow, MetricsRecord, METRICS_HEADER};
pub use stability::{stability_probe, ProbeSettings};
