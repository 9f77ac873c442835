use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::kalman::{kalman_gain, GaussianBelief};
use super::quadrature::gauss_hermite_normal;
use crate::error::{check_len, Error, Result};
use crate::ssm::{ModelSpec, ObsKind};

const EIGEN_FLOOR: f64 = 1e-12;

/// Symmetric square root through the eigendecomposition, eigenvalues clamped at `1e-12`.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_power(m, 0.5)
}

fn sym_power(m: &DMatrix<f64>, power: f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR).powf(power)));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// `x ↦ A x + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(x) + &self.c).as_slice().to_vec()
    }
}

/// `(x, y) ↦ A x + B y + d` with `A` symmetric positive definite, so that the map is
/// the `x`-gradient of the convex potential `½ xᵀA x + xᵀ(B y + d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalAffineMap {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl ConditionalAffineMap {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.b.ncols()
    }

    fn shift(&self, y: &[f64]) -> DVector<f64> {
        &self.b * DVector::from_column_slice(y) + &self.d
    }

    pub fn apply(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(x) + self.shift(y)).as_slice().to_vec()
    }

    pub fn at(&self, y: &[f64]) -> AffineMap {
        AffineMap {
            a: self.a.clone(),
            c: self.shift(y),
        }
    }

    pub fn potential(&self, x: &[f64], y: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.a * &x)) + x.dot(&self.shift(y))
    }

    /// Convex conjugate of [`Self::potential`] in `x`: `½ (p - s)ᵀ A⁻¹ (p - s)`, `s = B y + d`.
    pub fn conjugate(&self, p: &[f64], y: &[f64]) -> Result<f64> {
        let r = DVector::from_column_slice(p) - self.shift(y);
        let sol = self
            .a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Invalid("map matrix is not positive definite".into()))?
            .solve(&r);
        Ok(0.5 * r.dot(&sol))
    }
}

/// The optimal transport map from the Gaussian `prior` to its Bayes posterior, as a
/// function of the observation: `A = P^{-1/2} (P^{1/2} P⁺ P^{1/2})^{1/2} P^{-1/2}`,
/// `T(x; y) = A x + K y + (I - K H - A) m`.
pub fn conditional_bayes_map_gaussian(prior: &GaussianBelief, spec: &ModelSpec) -> Result<ConditionalAffineMap> {
    check_len("belief dimension", spec.n, prior.dim())?;
    let n = spec.n;
    let p = &prior.covariance;
    let min_eig = p.clone().symmetric_eigenvalues().min();
    if min_eig <= EIGEN_FLOOR {
        return Err(Error::Invalid(format!(
            "prior covariance is singular (smallest eigenvalue {min_eig:e})"
        )));
    }
    let k = kalman_gain(prior, spec)?;
    let h = match spec.obs {
        ObsKind::Zero => DMatrix::zeros(spec.m, n),
        _ => DMatrix::identity(spec.m, n),
    };
    let i_kh = DMatrix::identity(n, n) - &k * &h;
    let post = &i_kh * p * i_kh.transpose() + &k * k.transpose() * spec.obs_variance();
    let root = sym_sqrt(p);
    let inv_root = sym_power(p, -0.5);
    let middle = sym_sqrt(&(&root * &post * &root));
    let a = &inv_root * middle * &inv_root;
    let a = (&a + a.transpose()) * 0.5;
    let d = (&i_kh - &a) * &prior.mean;
    Ok(ConditionalAffineMap { a, b: k, d })
}

pub fn exact_bayes_map_gaussian(prior: &GaussianBelief, spec: &ModelSpec, y: &[f64]) -> Result<AffineMap> {
    check_len("observation", spec.m, y.len())?;
    Ok(conditional_bayes_map_gaussian(prior, spec)?.at(y))
}

/// Tensor-product Gauss-Hermite points for `N(0, I_dim)` with `k` nodes per axis.
pub(crate) fn tensor_rule(dim: usize, k: usize) -> Vec<(Vec<f64>, f64)> {
    let (x, w) = gauss_hermite_normal(k);
    let mut out = vec![(Vec::new(), 1.0)];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|(p, pw)| {
                x.iter().zip(&w).map(move |(xi, wi)| {
                    let mut q = p.clone();
                    q.push(*xi);
                    (q, pw * wi)
                })
            })
            .collect();
    }
    out
}

/// Value of the transport objective `E[f̄(X̄; Y) + f̄*(X; Y)]` at its minimizer,
/// with `X̄` independent of `Y`, for a Gaussian `prior` and a linear observation.
/// Computed by tensor Gauss-Hermite quadrature with `k` nodes per axis.
pub fn gaussian_objective_oracle(prior: &GaussianBelief, spec: &ModelSpec, k: usize) -> Result<f64> {
    let map = conditional_bayes_map_gaussian(prior, spec)?;
    let (n, m) = (spec.n, spec.m);
    let h = match spec.obs {
        ObsKind::Zero => DMatrix::zeros(m, n),
        _ => DMatrix::identity(m, n),
    };
    let lp = prior
        .covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Invalid("prior covariance is not positive definite".into()))?
        .l();
    let s = &h * &prior.covariance * h.transpose() + DMatrix::identity(m, m) * spec.obs_variance();
    let ls = s.cholesky().expect("observation marginal covariance is positive definite").l();
    let sigma = spec.sigma;
    let mut total = 0.0;
    for (z, w) in tensor_rule(n + m, k) {
        let (zx, zy) = z.split_at(n);
        let x = &prior.mean + &lp * DVector::from_column_slice(zx);
        let y_joint = &h * &x + DVector::from_column_slice(zy) * sigma;
        let y_indep = &h * &prior.mean + &ls * DVector::from_column_slice(zy);
        total += w * (map.potential(x.as_slice(), y_indep.as_slice()) + map.conjugate(x.as_slice(), y_joint.as_slice())?);
    }
    Ok(total)
}
