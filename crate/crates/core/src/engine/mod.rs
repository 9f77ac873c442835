//! Transport-map filtering.
//!
//! At each step the forecast ensemble `{X^i}` is paired with simulated observations
//! `Y^i ~ h(. | X^i)` and the pair distribution is used to solve
//!
//! ```text
//! min_f max_T  E_{P_XY}[ f(X; Y) ] + E_{P_X x P_Y}[ X . T(X; Y) - f(T(X; Y); Y) ]
//! ```
//!
//! with `f` an input-convex potential and `T` a residual network. At the saddle
//! point `T(.; y)` pushes the forecast distribution onto the posterior for every `y`,
//! so the analysis ensemble is `T(X^i; y_t)` for the observation actually received.

mod checkpoint;
mod step;
mod train;

pub use checkpoint::Checkpoint;
pub use step::{draw_parents, otpf_step, otpf_step_interacting, otpf_step_resampled, ParticleUpdate};
pub use train::{
    iteration_schedule, minimax_objective, train_bayes_map, NetworkShape, OtpfState, TrainReport, TrainSchedule,
    TrainingPool,
};
