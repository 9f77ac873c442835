//! Baseline filters: perturbed-observation ensemble Kalman filter and the SIR
//! particle filter with systematic resampling at every step.

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::ensemble::Ensemble;
use crate::error::{check_len, Error, Result};
use crate::rng::{fill_standard_normal, Rng};
use crate::ssm::ModelSpec;

/// Added to the diagonal of the predicted-observation covariance before inversion.
pub const ENKF_REGULARIZATION: f64 = 1e-9;

/// Normalized nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Normalizes `raw`. Fails on negative or nonfinite entries and on zero total mass.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Invalid("empty weight vector".into()));
        }
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid("weights must be finite and nonnegative".into()));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::MassUnderflow("weights"));
        }
        Ok(Self(raw.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(count: usize) -> Self {
        Self(vec![1.0 / count as f64; count])
    }

    /// Weights `∝ exp(log_w)` after a max shift. Returns uniform weights and
    /// `true` when nothing survives the shift (every entry `-inf` or NaN).
    pub fn from_log_weights(log_w: &[f64]) -> (Self, bool) {
        let max = log_w
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return (Self::uniform(log_w.len()), true);
        }
        let raw: Vec<f64> = log_w
            .iter()
            .map(|&l| if l.is_nan() { 0.0 } else { (l - max).exp() })
            .collect();
        match Self::new(raw) {
            Ok(w) => (w, false),
            Err(_) => (Self::uniform(log_w.len()), true),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `1 / Σ w_i²`.
pub fn effective_sample_size(w: &WeightVector) -> f64 {
    1.0 / w.0.iter().map(|v| v * v).sum::<f64>()
}

/// `N = w.len()` indices from one uniform offset and the grid `(i + U) / N`.
pub fn systematic_resample(w: &WeightVector, rng: &mut Rng) -> Vec<usize> {
    let count = w.len();
    let u: f64 = rng.random();
    let step = 1.0 / count as f64;
    let mut out = Vec::with_capacity(count);
    // Rounding in the running sum must never land on a zero-weight tail entry.
    let last = w.0.iter().rposition(|v| *v > 0.0).unwrap_or(count - 1);
    let mut j = 0;
    let mut cumulative = w.0[0];
    for i in 0..count {
        let position = (i as f64 + u) * step;
        while position > cumulative && j < last {
            j += 1;
            cumulative += w.0[j];
        }
        out.push(j);
    }
    out
}

fn check_step_inputs(ens: &Ensemble, y: &[f64], spec: &ModelSpec) -> Result<()> {
    check_len("ensemble dimension", spec.n, ens.dim())?;
    check_len("observation", spec.m, y.len())
}

/// EnKF forecast: propagated particles and their perturbed predicted
/// observations `h(x̂) + σw`. Per particle, `n` dynamics noises are drawn, then `m`
/// observation noises.
pub fn enkf_forecast(ens: &Ensemble, spec: &ModelSpec, rng: &mut Rng) -> Result<(Ensemble, Vec<f64>)> {
    check_len("ensemble dimension", spec.n, ens.dim())?;
    let (n, m, count) = (spec.n, spec.m, ens.len());
    let mut xs = vec![0.0; count * n];
    let mut ys = vec![0.0; count * m];
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; m];
    for i in 0..count {
        fill_standard_normal(rng, &mut v);
        spec.propagate_into(ens.particle(i), &v, &mut xs[i * n..(i + 1) * n]);
        fill_standard_normal(rng, &mut w);
        spec.observe_into(&xs[i * n..(i + 1) * n], &w, &mut ys[i * m..(i + 1) * m]);
    }
    Ok((Ensemble::new(n, ens.t + 1, xs)?, ys))
}

/// Gain `C_xy (C_yy + 1e-9 I)^{-1}` from the empirical covariances, `n x m`.
pub fn enkf_gain(forecast: &Ensemble, predicted: &[f64], m: usize) -> Result<DMatrix<f64>> {
    let (n, count) = (forecast.dim(), forecast.len());
    check_len("predicted observations", count * m, predicted.len())?;
    let x = DMatrix::from_row_slice(count, n, forecast.as_slice());
    let y = DMatrix::from_row_slice(count, m, predicted);
    let xc = &x - DMatrix::from_fn(count, n, |_, j| x.column(j).mean());
    let yc = &y - DMatrix::from_fn(count, m, |_, j| y.column(j).mean());
    let denom = (count.max(2) - 1) as f64;
    let cxy = xc.transpose() * &yc / denom;
    let mut cyy = yc.transpose() * &yc / denom;
    for i in 0..m {
        cyy[(i, i)] += ENKF_REGULARIZATION;
    }
    let cyy_t = cyy.transpose();
    // K C_yy = C_xy  <=>  C_yy^T K^T = C_xy^T
    let kt = match cyy_t.clone().cholesky() {
        Some(ch) => ch.solve(&cxy.transpose()),
        None => cyy_t
            .lu()
            .solve(&cxy.transpose())
            .ok_or_else(|| Error::Invalid("singular predicted-observation covariance".into()))?,
    };
    Ok(kt.transpose())
}

/// Analysis `x̂_i + K (y - ŷ_i)`.
pub fn enkf_analysis(forecast: &Ensemble, predicted: &[f64], y: &[f64]) -> Result<Ensemble> {
    let (n, m, count) = (forecast.dim(), y.len(), forecast.len());
    let k = enkf_gain(forecast, predicted, m)?;
    let mut out = forecast.as_slice().to_vec();
    let mut innovation = vec![0.0; m];
    for i in 0..count {
        for (d, (yo, yp)) in innovation.iter_mut().zip(y.iter().zip(&predicted[i * m..(i + 1) * m])) {
            *d = yo - yp;
        }
        let row = &mut out[i * n..(i + 1) * n];
        for (r, xv) in row.iter_mut().enumerate() {
            *xv += (0..m).map(|c| k[(r, c)] * innovation[c]).sum::<f64>();
        }
    }
    Ensemble::new(n, forecast.t, out)
}

pub fn enkf_step(ens: &Ensemble, y: &[f64], spec: &ModelSpec, rng: &mut Rng) -> Result<Ensemble> {
    check_step_inputs(ens, y, spec)?;
    let (forecast, predicted) = enkf_forecast(ens, spec, rng)?;
    enkf_analysis(&forecast, &predicted, y)
}

/// Result of one SIR step.
#[derive(Debug, Clone)]
pub struct SirOutcome {
    pub ensemble: Ensemble,
    /// ESS of the importance weights, before resampling.
    pub ess: f64,
    /// Every likelihood underflowed and uniform weights were used instead.
    pub underflow: bool,
}

/// Propagate, weight by the likelihood of `y`, resample systematically.
pub fn sir_step(ens: &Ensemble, y: &[f64], spec: &ModelSpec, rng: &mut Rng) -> Result<SirOutcome> {
    check_step_inputs(ens, y, spec)?;
    let (n, count) = (spec.n, ens.len());
    let mut xs = vec![0.0; count * n];
    let mut v = vec![0.0; n];
    let mut log_w = Vec::with_capacity(count);
    for i in 0..count {
        fill_standard_normal(rng, &mut v);
        let x = &mut xs[i * n..(i + 1) * n];
        spec.propagate_into(ens.particle(i), &v, x);
        log_w.push(spec.log_likelihood_unchecked(y, x));
    }
    let (weights, underflow) = WeightVector::from_log_weights(&log_w);
    let ess = effective_sample_size(&weights);
    let idx = systematic_resample(&weights, rng);
    let mut out = Vec::with_capacity(count * n);
    for &j in &idx {
        out.extend_from_slice(&xs[j * n..(j + 1) * n]);
    }
    Ok(SirOutcome {
        ensemble: Ensemble::new(n, ens.t + 1, out)?,
        ess,
        underflow,
    })
}
