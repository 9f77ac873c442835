use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::nn::IcnnParams;
use crate::oracles::{conditional_bayes_map_gaussian, ConditionalAffineMap, GaussianBelief};
use crate::ssm::{ModelSpec, ObsKind};

const MAX_NEWTON_STEPS: usize = 500;
/// Beyond this norm the maximizer is taken to be at infinity.
const DIVERGENCE_NORM: f64 = 1e8;

/// `f*(p; y) = sup_z p.z - f(z; y)` and its maximizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Conjugate {
    /// `+inf` when `p` lies outside the range of `grad_z f(.; y)`.
    pub value: f64,
    pub argmax: Vec<f64>,
    pub converged: bool,
}

/// Conjugate of the potential in its first argument, by damped Newton on the
/// convex function `f(z; y) - p.z` with Armijo backtracking.
pub fn icnn_conjugate(f: &IcnnParams, p: &[f64], y: &[f64]) -> Result<Conjugate> {
    let n = f.state_dim();
    check_len("conjugate point", n, p.len())?;
    check_len("ICNN observation input", f.obs_dim(), y.len())?;
    let phi = |z: &[f64]| f.eval_unchecked(z, y) - z.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
    let tol = 1e-12 * (1.0 + p.iter().map(|v| v.abs()).fold(0.0, f64::max));
    let mut z = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n * n];
    let mut converged = false;
    for _ in 0..MAX_NEWTON_STEPS {
        f.grad_x_into(&z, y, &mut grad);
        grad.iter_mut().zip(p).for_each(|(g, pv)| *g -= pv);
        let gnorm = grad.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if gnorm <= tol {
            converged = true;
            break;
        }
        f.hessian_x_into(&z, y, &mut hess);
        let mut h = DMatrix::from_row_slice(n, n, &hess);
        let ridge = 1e-12 * (1.0 + h.trace());
        for i in 0..n {
            h[(i, i)] += ridge;
        }
        let g = DVector::from_column_slice(&grad);
        let step = match h.cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -g.clone(),
        };
        let slope = step.dot(&g);
        let base = phi(&z);
        let mut t = 1.0;
        let mut trial = z.clone();
        loop {
            for (i, v) in trial.iter_mut().enumerate() {
                *v = z[i] + t * step[i];
            }
            if phi(&trial) <= base + 1e-4 * t * slope || t < 1e-30 {
                break;
            }
            t *= 0.5;
        }
        if t < 1e-30 {
            // No descent along the Newton direction: at the minimum to rounding.
            converged = gnorm <= 1e-8 * (1.0 + gnorm);
            break;
        }
        z = trial;
        if z.iter().map(|v| v.abs()).fold(0.0, f64::max) > DIVERGENCE_NORM {
            return Ok(Conjugate {
                value: f64::INFINITY,
                argmax: z,
                converged: true,
            });
        }
    }
    Ok(Conjugate {
        value: -phi(&z),
        argmax: z,
        converged,
    })
}

/// Both sides of `J(f) - J(f̄) >= (1/2β) E‖∇f(X̄; Y) - ∇f̄(X̄; Y)‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates the optimization-gap inequality on weighted samples `(x̄_i, y_i)` of the
/// independent coupling. The joint expectation in `J` is taken at the oracle images
/// `(∇f̄(x̄_i; y_i), y_i)`, which have the joint law, so that
///
/// `lhs = Σ w_i [f(x̄_i; y_i) + f*(p_i; y_i) - x̄_i.p_i]`, `p_i = ∇f̄(x̄_i; y_i)`,
///
/// using the Fenchel equality for the quadratic `f̄`.
pub fn gap_inequality_check(
    f: &IcnnParams,
    oracle: &ConditionalAffineMap,
    samples: &[(Vec<f64>, Vec<f64>)],
    weights: &[f64],
    beta: f64,
    tolerance: f64,
) -> Result<GapCheck> {
    if !(beta > 0.0) {
        return Err(Error::Invalid(format!("smoothness bound must be positive, got {beta}")));
    }
    check_len("sample weights", samples.len(), weights.len())?;
    check_len("oracle state dimension", f.state_dim(), oracle.state_dim())?;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let mut grad = vec![0.0; f.state_dim()];
    for ((x, y), w) in samples.iter().zip(weights) {
        check_len("sample state", f.state_dim(), x.len())?;
        check_len("sample observation", f.obs_dim(), y.len())?;
        let p = oracle.apply(x, y);
        let conj = icnn_conjugate(f, &p, y)?;
        let dot: f64 = x.iter().zip(&p).map(|(a, b)| a * b).sum();
        lhs += w * (f.eval_unchecked(x, y) + conj.value - dot);
        f.grad_x_into(x, y, &mut grad);
        rhs += w * grad.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    rhs /= 2.0 * beta;
    Ok(GapCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - tolerance,
    })
}

/// Tensor Gauss-Hermite samples of `P_X ⊗ P_Y` for a Gaussian prior and a linear
/// observation, `k` nodes per axis, with the oracle map of that setting.
pub fn gaussian_gap_samples(
    prior: &GaussianBelief,
    spec: &ModelSpec,
    k: usize,
) -> Result<(Vec<(Vec<f64>, Vec<f64>)>, Vec<f64>, ConditionalAffineMap)> {
    let oracle = conditional_bayes_map_gaussian(prior, spec)?;
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
    let mut samples = Vec::new();
    let mut weights = Vec::new();
    for (z, w) in crate::oracles::tensor_rule(n + m, k) {
        let (zx, zy) = z.split_at(n);
        let x = &prior.mean + &lp * DVector::from_column_slice(zx);
        let y = &h * &prior.mean + &ls * DVector::from_column_slice(zy);
        samples.push((x.as_slice().to_vec(), y.as_slice().to_vec()));
        weights.push(w);
    }
    Ok((samples, weights, oracle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::project_icnn;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    /// `(a/2)(x + (b y + d + c)/a)²` as two ICNN units: the oracle potential plus
    /// the tilt `c x`, up to a function of `y`.
    fn tilted_oracle(map: &ConditionalAffineMap, c: f64) -> IcnnParams {
        let (a, b, d) = (map.a[(0, 0)], map.b[(0, 0)], map.d[0]);
        IcnnParams::from_flat(
            1,
            1,
            2,
            vec![a / 2.0, a / 2.0, 1.0, -1.0, b / a, -b / a, (d + c) / a, -(d + c) / a],
        )
        .unwrap()
    }

    fn setting() -> (Vec<(Vec<f64>, Vec<f64>)>, Vec<f64>, ConditionalAffineMap) {
        let spec = ModelSpec::benchmark(1, ObsKind::Linear);
        gaussian_gap_samples(&GaussianBelief::standard(1), &spec, 12).unwrap()
    }

    #[test]
    fn conjugate_of_quadratic() {
        // f(z) = (z - 1)² → f*(p) = p + p²/4, maximizer 1 + p/2.
        let f = IcnnParams::from_flat(1, 1, 2, vec![1.0, 1.0, 1.0, -1.0, 0.0, 0.0, -1.0, 1.0]).unwrap();
        for p in [-3.0, 0.0, 0.5, 4.0] {
            let c = icnn_conjugate(&f, &[p], &[0.3]).unwrap();
            assert!(c.converged);
            assert!((c.value - (p + p * p / 4.0)).abs() < 1e-10);
            assert!((c.argmax[0] - (1.0 + p / 2.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn conjugate_outside_gradient_range_is_infinite() {
        // f(z) = relu(z)²: gradient range is [0, inf), so f*(-1) = +inf.
        let f = IcnnParams::from_flat(1, 1, 1, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(icnn_conjugate(&f, &[-1.0], &[0.0]).unwrap().value, f64::INFINITY);
        let c = icnn_conjugate(&f, &[2.0], &[0.0]).unwrap();
        assert!((c.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_oracle_has_zero_gap() {
        let (samples, weights, map) = setting();
        let f = tilted_oracle(&map, 0.0);
        let beta = f.gradient_lipschitz_bound();
        let g = gap_inequality_check(&f, &map, &samples, &weights, beta, 1e-9).unwrap();
        assert!(g.lhs.abs() < 1e-9 && g.rhs.abs() < 1e-12 && g.holds, "{g:?}");
    }

    #[test]
    fn linear_tilt() {
        // Gradients differ by c everywhere; the gap is c²/(2a) with a the map slope.
        let (samples, weights, map) = setting();
        let a = map.a[(0, 0)];
        for c in [-0.7, 0.2, 1.5] {
            let f = tilted_oracle(&map, c);
            let g = gap_inequality_check(&f, &map, &samples, &weights, a, 1e-9).unwrap();
            assert!((g.lhs - c * c / (2.0 * a)).abs() < 1e-9, "{g:?}");
            assert!((g.rhs - c * c / (2.0 * a)).abs() < 1e-9);
            assert!(g.holds);
            let loose = gap_inequality_check(&f, &map, &samples, &weights, f.gradient_lipschitz_bound(), 1e-9).unwrap();
            assert!(loose.holds && loose.rhs < loose.lhs);
        }
    }

    #[test]
    fn random_icnns_never_violate() {
        let (samples, weights, map) = setting();
        let mut rng = rng_from_seed(17);
        for _ in 0..20 {
            let mut f = IcnnParams::init(1, 1, 8, &mut rng);
            for v in f.as_mut_slice() {
                *v += rng.random_range(-0.5..0.5);
            }
            let f = project_icnn(f);
            let beta = f.gradient_lipschitz_bound();
            if beta == 0.0 {
                continue;
            }
            let g = gap_inequality_check(&f, &map, &samples, &weights, beta, 1e-9).unwrap();
            assert!(g.holds, "{g:?}");
        }
    }

    #[test]
    fn nonpositive_beta_rejected() {
        let (samples, weights, map) = setting();
        let f = tilted_oracle(&map, 0.0);
        assert!(gap_inequality_check(&f, &map, &samples, &weights, 0.0, 0.0).is_err());
    }
}
