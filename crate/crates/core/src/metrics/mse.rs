use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{check_len, Error, Result};
use crate::oracles::GridBelief;
use crate::ssm::Trajectory;

/// Test function applied coordinate-wise before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi {
    Identity,
    Relu,
}

impl Phi {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Self::Identity => v,
            Self::Relu => v.max(0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Relu => "relu",
        }
    }
}

/// `‖(1/N) Σ φ(X^i) - φ(x)‖²` for one ensemble and one true state.
pub fn ensemble_sq_error(ens: &Ensemble, truth: &[f64], phi: Phi) -> Result<f64> {
    check_len("true state", ens.dim(), truth.len())?;
    let mut mean = vec![0.0; ens.dim()];
    for p in ens.particles() {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += phi.apply(*v);
        }
    }
    let inv = 1.0 / ens.len() as f64;
    Ok(mean
        .iter()
        .zip(truth)
        .map(|(m, x)| (m * inv - phi.apply(*x)).powi(2))
        .sum())
}

/// Per-step MSE averaged over simulations. `ensembles[s][k]` is the analysis
/// ensemble of simulation `s` at step `k + 1`, compared with `truths[s].states[k]`.
pub fn mse(ensembles: &[Vec<Ensemble>], truths: &[Trajectory], phi: Phi) -> Result<Vec<f64>> {
    check_len("simulations", truths.len(), ensembles.len())?;
    let steps = truths.first().map_or(0, Trajectory::len);
    if truths.is_empty() {
        return Err(Error::Invalid("no simulations".into()));
    }
    let mut out = vec![0.0; steps];
    for (ens, truth) in ensembles.iter().zip(truths) {
        check_len("trajectory length", steps, truth.len())?;
        check_len("ensemble sequence length", steps, ens.len())?;
        for (k, (e, x)) in ens.iter().zip(&truth.states).enumerate() {
            out[k] += ensemble_sq_error(e, x, phi)?;
        }
    }
    let inv = 1.0 / truths.len() as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    Ok(out)
}

/// Fraction of particles with a strictly positive coordinate `axis`.
pub fn bimodality_balance(ens: &Ensemble, axis: usize) -> f64 {
    let positive = ens.particles().filter(|p| p[axis] > 0.0).count();
    positive as f64 / ens.len() as f64
}

/// Kolmogorov-Smirnov distance between the empirical distribution of coordinate
/// `axis` of `ens` and the grid marginal along the same axis.
pub fn ks_distance_to_grid(ens: &Ensemble, grid: &GridBelief, axis: usize) -> f64 {
    let inv = 1.0 / ens.len() as f64;
    let mut events: Vec<(f64, f64)> = ens.particles().map(|p| (p[axis], inv)).collect();
    // Grid mass enters with a negative sign so the running sum is F_ens - F_grid.
    events.extend(grid.axis(axis).iter().zip(grid.marginal(axis)).map(|(x, w)| (*x, -w)));
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut diff = 0.0f64;
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < events.len() {
        let x = events[i].0;
        while i < events.len() && events[i].0 == x {
            diff += events[i].1;
            i += 1;
        }
        worst = worst.max(diff.abs());
    }
    worst
}
