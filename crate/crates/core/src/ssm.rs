//! Benchmark state-space model
//!
//! ```text
//! X_t = (1 - alpha) X_{t-1} + 2 sigma V_t,   X_0 ~ N(0, I_n)
//! Y_t = h(X_t) + sigma W_t
//! ```
//!
//! with `V_t`, `W_t` i.i.d. standard Gaussian and `h` the element-wise identity,
//! square or cube.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::io::{fmt_f64, numbered, write_row};
use crate::rng::{fill_standard_normal, Rng};

pub const BENCHMARK_ALPHA: f64 = 0.1;

pub fn benchmark_sigma() -> f64 {
    0.1f64.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsKind {
    Linear,
    Quadratic,
    Cubic,
    /// `h = 0`: observations carry no information about the state.
    Zero,
}

impl ObsKind {
    pub fn name(self) -> &'static str {
        match self {
            ObsKind::Linear => "linear",
            ObsKind::Quadratic => "quadratic",
            ObsKind::Cubic => "cubic",
            ObsKind::Zero => "zero",
        }
    }

    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            ObsKind::Linear => v,
            ObsKind::Quadratic => v * v,
            ObsKind::Cubic => v * v * v,
            ObsKind::Zero => 0.0,
        }
    }
}

impl std::str::FromStr for ObsKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ObsKind::Linear),
            "quadratic" => Ok(ObsKind::Quadratic),
            "cubic" => Ok(ObsKind::Cubic),
            "zero" => Ok(ObsKind::Zero),
            other => Err(Error::Invalid(format!("unknown observation kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub obs: ObsKind,
}

impl ModelSpec {
    pub fn new(n: usize, alpha: f64, sigma: f64, obs: ObsKind) -> Result<Self> {
        let spec = Self {
            n,
            m: n,
            alpha,
            sigma,
            obs,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `alpha = 0.1`, `sigma = sqrt(0.1)`.
    pub fn benchmark(n: usize, obs: ObsKind) -> Self {
        Self::new(n, BENCHMARK_ALPHA, benchmark_sigma(), obs).expect("benchmark constants are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Invalid("state dimension must be at least 1".into()));
        }
        if self.m != self.n {
            return Err(Error::Invalid("element-wise observations require m = n".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Per-coordinate variance of the dynamics noise, `4 sigma^2`.
    pub fn process_variance(&self) -> f64 {
        4.0 * self.sigma * self.sigma
    }

    pub fn obs_variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub(crate) fn propagate_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let (a, s) = (1.0 - self.alpha, 2.0 * self.sigma);
        for ((o, xi), vi) in out.iter_mut().zip(x).zip(v) {
            *o = a * xi + s * vi;
        }
    }

    pub(crate) fn observe_into(&self, x: &[f64], w: &[f64], out: &mut [f64]) {
        for ((o, xi), wi) in out.iter_mut().zip(x).zip(w) {
            *o = self.obs.apply(*xi) + self.sigma * wi;
        }
    }

    #[inline]
    pub(crate) fn log_likelihood_unchecked(&self, y: &[f64], x: &[f64]) -> f64 {
        let s2 = self.obs_variance();
        let r2: f64 = y.iter().zip(x).map(|(yi, xi)| (yi - self.obs.apply(*xi)).powi(2)).sum();
        -r2 / (2.0 * s2) - 0.5 * self.m as f64 * (2.0 * std::f64::consts::PI * s2).ln()
    }
}

/// `(1 - alpha) x + 2 sigma v`.
pub fn propagate(spec: &ModelSpec, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_len("propagate state", spec.n, x.len())?;
    check_len("propagate noise", spec.n, v.len())?;
    let mut out = vec![0.0; spec.n];
    spec.propagate_into(x, v, &mut out);
    Ok(out)
}

pub fn obs_fn(spec: &ModelSpec, x: &[f64]) -> Result<Vec<f64>> {
    check_len("observation function input", spec.n, x.len())?;
    Ok(x.iter().map(|v| spec.obs.apply(*v)).collect())
}

/// `h(x) + sigma w`.
pub fn observe(spec: &ModelSpec, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    check_len("observe state", spec.n, x.len())?;
    check_len("observe noise", spec.m, w.len())?;
    let mut out = vec![0.0; spec.m];
    spec.observe_into(x, w, &mut out);
    Ok(out)
}

/// Gaussian log-density `log N(y; h(x), sigma^2 I)`.
pub fn log_likelihood(spec: &ModelSpec, y: &[f64], x: &[f64]) -> Result<f64> {
    check_len("likelihood observation", spec.m, y.len())?;
    check_len("likelihood state", spec.n, x.len())?;
    Ok(spec.log_likelihood_unchecked(y, x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial_state: Vec<f64>,
    /// `X_1 .. X_T`
    pub states: Vec<Vec<f64>>,
    /// `Y_1 .. Y_T`
    pub observations: Vec<Vec<f64>>,
    pub seed: Option<u64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// CSV with header `t,x_1..x_n,y_1..y_m`, one row per step `t = 1..T`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let n = self.initial_state.len();
        let m = self.observations.first().map_or(0, Vec::len);
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain(numbered("x", n))
            .chain(numbered("y", m))
            .collect();
        write_row(out, &header)?;
        for (t, (x, y)) in self.states.iter().zip(&self.observations).enumerate() {
            let row: Vec<String> = std::iter::once((t + 1).to_string())
                .chain(x.iter().chain(y).map(|v| fmt_f64(*v)))
                .collect();
            write_row(out, &row)?;
        }
        Ok(())
    }
}

/// Draws `X_0 ~ N(0, I)` and runs the model for `steps` steps.
pub fn simulate(spec: &ModelSpec, steps: usize, rng: &mut Rng) -> Result<Trajectory> {
    let mut x0 = vec![0.0; spec.n];
    fill_standard_normal(rng, &mut x0);
    simulate_from(spec, x0, steps, rng)
}

/// Runs the model from a given initial state. Per step the generator yields the
/// `n` dynamics noises followed by the `m` observation noises.
pub fn simulate_from(spec: &ModelSpec, initial_state: Vec<f64>, steps: usize, rng: &mut Rng) -> Result<Trajectory> {
    spec.validate()?;
    check_len("initial state", spec.n, initial_state.len())?;
    if steps == 0 {
        return Err(Error::Invalid("trajectory needs at least one step".into()));
    }
    let mut states = Vec::with_capacity(steps);
    let mut observations = Vec::with_capacity(steps);
    let mut x = initial_state.clone();
    let mut v = vec![0.0; spec.n];
    let mut w = vec![0.0; spec.m];
    for _ in 0..steps {
        fill_standard_normal(rng, &mut v);
        let mut next = vec![0.0; spec.n];
        spec.propagate_into(&x, &v, &mut next);
        fill_standard_normal(rng, &mut w);
        let mut y = vec![0.0; spec.m];
        spec.observe_into(&next, &w, &mut y);
        states.push(next.clone());
        observations.push(y);
        x = next;
    }
    Ok(Trajectory {
        initial_state,
        states,
        observations,
        seed: None,
    })
}
