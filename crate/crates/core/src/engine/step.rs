use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::train::{iteration_schedule, train_bayes_map, OtpfState, TrainReport, TrainSchedule, TrainingPool};
use crate::ensemble::Ensemble;
use crate::error::{check_len, Error, Result};
use crate::nn::ResNetCache;
use crate::rng::{fill_standard_normal, Rng};
use crate::ssm::ModelSpec;

/// How forecast particles pick their parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParticleUpdate {
    /// Particle `i` is propagated from particle `i`.
    Interacting,
    /// Particle `i` is propagated from a parent drawn uniformly with replacement.
    Resampled,
}

/// `count` parent indices drawn uniformly from `0..count`.
pub fn draw_parents(count: usize, rng: &mut Rng) -> Vec<usize> {
    (0..count).map(|_| rng.random_range(0..count)).collect()
}

pub fn otpf_step_interacting(
    ens: &Ensemble,
    y: &[f64],
    spec: &ModelSpec,
    state: &mut OtpfState,
    schedule: &TrainSchedule,
    rng: &mut Rng,
) -> Result<(Ensemble, TrainReport)> {
    otpf_step(ParticleUpdate::Interacting, ens, y, spec, state, schedule, rng)
}

pub fn otpf_step_resampled(
    ens: &Ensemble,
    y: &[f64],
    spec: &ModelSpec,
    state: &mut OtpfState,
    schedule: &TrainSchedule,
    rng: &mut Rng,
) -> Result<(Ensemble, TrainReport)> {
    otpf_step(ParticleUpdate::Resampled, ens, y, spec, state, schedule, rng)
}

/// One filtering step from `ens` (time `t-1`) to time `t` given the observation `y`.
///
/// Random draws, in order: parent indices (resampled variant only), then per
/// particle `n` dynamics noises and `m` observation noises, then whatever the
/// training run consumes. With `warm_start` off the networks are re-drawn from
/// `rng` before training at every step after the first.
pub fn otpf_step(
    update: ParticleUpdate,
    ens: &Ensemble,
    y: &[f64],
    spec: &ModelSpec,
    state: &mut OtpfState,
    schedule: &TrainSchedule,
    rng: &mut Rng,
) -> Result<(Ensemble, TrainReport)> {
    let (n, m) = (spec.n, spec.m);
    check_len("ensemble dimension", n, ens.dim())?;
    check_len("observation", m, y.len())?;
    check_len("potential state dimension", n, state.icnn.state_dim())?;
    check_len("potential observation dimension", m, state.icnn.obs_dim())?;
    if state.time_index != ens.t {
        return Err(Error::Invalid(format!(
            "transport state is at time {} but the ensemble is at time {}",
            state.time_index, ens.t
        )));
    }
    let count = ens.len();
    let t = ens.t + 1;

    let parents = match update {
        ParticleUpdate::Interacting => (0..count).collect(),
        ParticleUpdate::Resampled => draw_parents(count, rng),
    };
    let mut xs = vec![0.0; count * n];
    let mut ys = vec![0.0; count * m];
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; m];
    for (i, &parent) in parents.iter().enumerate() {
        fill_standard_normal(rng, &mut v);
        spec.propagate_into(ens.particle(parent), &v, &mut xs[i * n..(i + 1) * n]);
        fill_standard_normal(rng, &mut w);
        let (x, yo) = (&xs[i * n..(i + 1) * n], &mut ys[i * m..(i + 1) * m]);
        spec.observe_into(x, &w, yo);
    }

    if !schedule.warm_start && t > 1 {
        state.reinitialize(rng);
    }
    state.budget = iteration_schedule(t, schedule);
    let pool = TrainingPool::new(n, m, xs, ys)?;
    let report = train_bayes_map(&pool, schedule, state, rng)?;

    let y = pool.standardize_obs(y);
    let mut cache = ResNetCache::default();
    let mut out = Vec::with_capacity(count * n);
    for i in 0..count {
        let z = state.transport.forward(pool.x(i), &y, &mut cache);
        out.extend(pool.unstandardize_state(z));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration: report.iterations,
            value: f64::NAN,
        });
    }
    state.time_index = t;
    Ok((Ensemble::new(n, t, out)?, report))
}
