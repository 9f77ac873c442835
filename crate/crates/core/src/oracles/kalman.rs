use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::ssm::{ModelSpec, ObsKind};

/// `N(mean, covariance)`, covariance stored as a dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::Dimension {
                what: "belief covariance",
                expected: n,
                got: covariance.nrows(),
            });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("belief"));
        }
        Ok(Self { mean, covariance })
    }

    /// `N(0, I_n)`, the benchmark prior.
    pub fn standard(n: usize) -> Self {
        Self {
            mean: DVector::zeros(n),
            covariance: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Observation matrix of the benchmark when it is linear: `I` or `0`.
fn obs_matrix(spec: &ModelSpec) -> Result<DMatrix<f64>> {
    match spec.obs {
        ObsKind::Linear => Ok(DMatrix::identity(spec.m, spec.n)),
        ObsKind::Zero => Ok(DMatrix::zeros(spec.m, spec.n)),
        other => Err(Error::Unsupported {
            what: "Kalman update",
            requirement: match other {
                ObsKind::Quadratic => "a linear observation function (got quadratic)",
                _ => "a linear observation function (got cubic)",
            },
        }),
    }
}

/// `m⁻ = (1-α) m`, `P⁻ = (1-α)² P + 4σ² I`.
pub fn kalman_predict(b: &GaussianBelief, spec: &ModelSpec) -> Result<GaussianBelief> {
    check_len("belief dimension", spec.n, b.dim())?;
    let a = 1.0 - spec.alpha;
    let q = spec.process_variance();
    let mut cov = &b.covariance * (a * a);
    for i in 0..spec.n {
        cov[(i, i)] += q;
    }
    Ok(GaussianBelief {
        mean: &b.mean * a,
        covariance: cov,
    })
}

/// Bayes update of `b` with `y = H x + σ w`. The Joseph form keeps the covariance
/// symmetric positive semidefinite.
pub fn kalman_update(b: &GaussianBelief, y: &[f64], spec: &ModelSpec) -> Result<GaussianBelief> {
    check_len("belief dimension", spec.n, b.dim())?;
    check_len("observation", spec.m, y.len())?;
    let h = obs_matrix(spec)?;
    let r = DMatrix::identity(spec.m, spec.m) * spec.obs_variance();
    let p = &b.covariance;
    let s = &h * p * h.transpose() + &r;
    let pht = p * h.transpose();
    let k = s
        .cholesky()
        .ok_or_else(|| Error::Invalid("innovation covariance is not positive definite".into()))?
        .solve(&pht.transpose())
        .transpose();
    let innovation = DVector::from_column_slice(y) - &h * &b.mean;
    let mean = &b.mean + &k * innovation;
    let i_kh = DMatrix::identity(spec.n, spec.n) - &k * &h;
    let cov = &i_kh * p * i_kh.transpose() + &k * r * k.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianBelief::new(mean, cov)
}

pub fn kalman_step(b: &GaussianBelief, y: &[f64], spec: &ModelSpec) -> Result<GaussianBelief> {
    kalman_update(&kalman_predict(b, spec)?, y, spec)
}

/// Kalman gain of the update applied to the predicted belief `predicted`.
pub(crate) fn kalman_gain(predicted: &GaussianBelief, spec: &ModelSpec) -> Result<DMatrix<f64>> {
    let h = obs_matrix(spec)?;
    let p = &predicted.covariance;
    let s = &h * p * h.transpose() + DMatrix::identity(spec.m, spec.m) * spec.obs_variance();
    Ok(s
        .cholesky()
        .ok_or_else(|| Error::Invalid("innovation covariance is not positive definite".into()))?
        .solve(&(p * h.transpose()).transpose())
        .transpose())
}
