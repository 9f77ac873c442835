//! The two small dense networks used by the transport filter and their optimizer.
//!
//! Both networks keep their parameters in one flat `Vec<f64>` whose order is also
//! the checkpoint order:
//!
//! * [`IcnnParams`]: `W` (K), `Wx` (K x n, row-major), `Wy` (K x m, row-major), `b` (K).
//! * [`TransportNetParams`]: input layer (`width x (n+m)` weights then `width` biases),
//!   then for each residual block its first and second affine layers (weights then
//!   biases, `width x width` and `width`), then the output layer (`n x width`, `n`).
//!
//! Gradients are returned in the same container type and layout as the parameters.

mod adam;
mod icnn;
mod resnet;

pub use adam::{AdamConfig, AdamState, Direction};
pub use icnn::{icnn_backward, icnn_eval, icnn_grad_x, project_icnn, IcnnParams};
pub use resnet::{resnet_backward, resnet_eval, ResNetCache, TransportNetParams};

use rand::Rng as _;

use crate::rng::Rng;

/// Uniform draw on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub(crate) fn fan_in_uniform(rng: &mut Rng, fan_in: usize) -> f64 {
    let bound = 1.0 / (fan_in as f64).sqrt();
    rng.random_range(-bound..bound)
}
