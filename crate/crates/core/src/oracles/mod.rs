//! Exact references for the benchmark model.
//!
//! * [`kalman_step`]: the Kalman recursion (linear or zero observation function).
//! * [`grid_filter_step`]: a direct-summation Bayes filter on a uniform mesh, `n <= 2`.
//! * [`exact_bayes_map_gaussian`]: the affine optimal transport map from a Gaussian
//!   prior to its Kalman posterior, with its convex potential and conjugate.
//! * [`gauss_hermite_normal`]: Golub-Welsch quadrature for Gaussian expectations.

mod affine;
mod grid;
mod kalman;
mod quadrature;

pub use affine::{
    conditional_bayes_map_gaussian, exact_bayes_map_gaussian, gaussian_objective_oracle, sym_sqrt, AffineMap,
    ConditionalAffineMap,
};
pub use grid::{grid_filter_step, GridBelief, DEFAULT_GRID_1D, DEFAULT_GRID_2D, DEFAULT_HALF_WIDTH};
pub use kalman::{kalman_predict, kalman_step, kalman_update, GaussianBelief};
pub use quadrature::gauss_hermite_normal;
pub(crate) use affine::tensor_rule;
