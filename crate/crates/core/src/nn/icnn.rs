use serde::{Deserialize, Serialize};

use super::fan_in_uniform;
use crate::error::{check_len, Error, Result};
use crate::rng::Rng;

/// Partially input-convex potential
///
/// `f(x; y) = sum_k W_k * relu(Wx_k . x + Wy_k . y + b_k)^2`
///
/// which is convex in `x` for every `y` as long as all `W_k >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcnnParams {
    n: usize,
    m: usize,
    units: usize,
    data: Vec<f64>,
}

impl IcnnParams {
    pub fn zeros(n: usize, m: usize, units: usize) -> Self {
        assert!(n >= 1 && units >= 1, "ICNN needs n >= 1 and at least one unit");
        Self {
            n,
            m,
            units,
            data: vec![0.0; Self::param_count(n, m, units)],
        }
    }

    /// Affine weights uniform in `+-1/sqrt(n+m)`, outer weights `|U(+-1/sqrt(K))|`.
    pub fn init(n: usize, m: usize, units: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(n, m, units);
        let fan = n + m;
        for k in 0..units {
            p.w_mut()[k] = fan_in_uniform(rng, units).abs();
        }
        for v in p.wx_all_mut() {
            *v = fan_in_uniform(rng, fan);
        }
        for v in p.wy_all_mut() {
            *v = fan_in_uniform(rng, fan);
        }
        for v in p.b_mut() {
            *v = fan_in_uniform(rng, fan);
        }
        p
    }

    pub fn from_flat(n: usize, m: usize, units: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || units == 0 {
            return Err(Error::Invalid("ICNN needs n >= 1 and units >= 1".into()));
        }
        check_len("ICNN parameter vector", Self::param_count(n, m, units), data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ICNN parameters"));
        }
        Ok(Self { n, m, units, data })
    }

    pub fn param_count(n: usize, m: usize, units: usize) -> usize {
        units * (n + m + 2)
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn obs_dim(&self) -> usize {
        self.m
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn w(&self) -> &[f64] {
        &self.data[..self.units]
    }

    pub fn w_mut(&mut self) -> &mut [f64] {
        &mut self.data[..self.units]
    }

    pub fn wx(&self, k: usize) -> &[f64] {
        let start = self.units + k * self.n;
        &self.data[start..start + self.n]
    }

    pub fn wx_mut(&mut self, k: usize) -> &mut [f64] {
        let start = self.units + k * self.n;
        &mut self.data[start..start + self.n]
    }

    fn wx_all_mut(&mut self) -> &mut [f64] {
        let start = self.units;
        &mut self.data[start..start + self.units * self.n]
    }

    pub fn wy(&self, k: usize) -> &[f64] {
        let start = self.units * (1 + self.n) + k * self.m;
        &self.data[start..start + self.m]
    }

    pub fn wy_mut(&mut self, k: usize) -> &mut [f64] {
        let start = self.units * (1 + self.n) + k * self.m;
        &mut self.data[start..start + self.m]
    }

    fn wy_all_mut(&mut self) -> &mut [f64] {
        let start = self.units * (1 + self.n);
        &mut self.data[start..start + self.units * self.m]
    }

    pub fn b(&self) -> &[f64] {
        &self.data[self.units * (1 + self.n + self.m)..]
    }

    pub fn b_mut(&mut self) -> &mut [f64] {
        let start = self.units * (1 + self.n + self.m);
        &mut self.data[start..]
    }

    fn check_inputs(&self, x: &[f64], y: &[f64]) -> Result<()> {
        check_len("ICNN state input", self.n, x.len())?;
        check_len("ICNN observation input", self.m, y.len())
    }

    #[inline]
    pub(crate) fn preactivation(&self, k: usize, x: &[f64], y: &[f64]) -> f64 {
        let mut z = self.b()[k];
        for (a, b) in self.wx(k).iter().zip(x) {
            z += a * b;
        }
        for (a, b) in self.wy(k).iter().zip(y) {
            z += a * b;
        }
        z
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let w = self.w();
        (0..self.units)
            .map(|k| {
                let r = self.preactivation(k, x, y).max(0.0);
                w[k] * r * r
            })
            .sum()
    }

    pub(crate) fn grad_x_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.units {
            let r = self.preactivation(k, x, y);
            if r > 0.0 {
                let s = 2.0 * self.w()[k] * r;
                for (o, a) in out.iter_mut().zip(self.wx(k)) {
                    *o += s * a;
                }
            }
        }
    }

    /// Hessian in `x`, row-major `n x n` (one-sided at the kinks).
    pub(crate) fn hessian_x_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.units {
            if self.preactivation(k, x, y) > 0.0 {
                let s = 2.0 * self.w()[k];
                let a = self.wx(k);
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] += s * a[i] * a[j];
                    }
                }
            }
        }
    }

    /// Adds `upstream * d f(x; y) / d params` into `grad`.
    pub(crate) fn backward_accumulate(&self, x: &[f64], y: &[f64], upstream: f64, grad: &mut [f64]) {
        let (units, n, m) = (self.units, self.n, self.m);
        for k in 0..units {
            let r = self.preactivation(k, x, y);
            if r <= 0.0 {
                continue;
            }
            grad[k] += upstream * r * r;
            let s = upstream * 2.0 * self.w()[k] * r;
            let gx = &mut grad[units + k * n..units + (k + 1) * n];
            for (g, xi) in gx.iter_mut().zip(x) {
                *g += s * xi;
            }
            let off = units * (1 + n) + k * m;
            for (g, yi) in grad[off..off + m].iter_mut().zip(y) {
                *g += s * yi;
            }
            grad[units * (1 + n + m) + k] += s;
        }
    }

    /// Smoothness bound `sum_k 2 W_k |Wx_k|^2` on the Lipschitz constant of `grad_x f`.
    pub fn gradient_lipschitz_bound(&self) -> f64 {
        (0..self.units)
            .map(|k| 2.0 * self.w()[k].max(0.0) * self.wx(k).iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

pub fn icnn_eval(p: &IcnnParams, x: &[f64], y: &[f64]) -> Result<f64> {
    p.check_inputs(x, y)?;
    Ok(p.eval_unchecked(x, y))
}

pub fn icnn_grad_x(p: &IcnnParams, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    p.check_inputs(x, y)?;
    let mut out = vec![0.0; p.n];
    p.grad_x_into(x, y, &mut out);
    Ok(out)
}

/// Gradient of `upstream * f(x; y)` with respect to every parameter.
pub fn icnn_backward(p: &IcnnParams, x: &[f64], y: &[f64], upstream: f64) -> Result<IcnnParams> {
    p.check_inputs(x, y)?;
    let mut g = IcnnParams::zeros(p.n, p.m, p.units);
    p.backward_accumulate(x, y, upstream, &mut g.data);
    Ok(g)
}

/// Clamps the outer weights at zero, restoring convexity in `x`.
pub fn project_icnn(mut p: IcnnParams) -> IcnnParams {
    for w in p.w_mut() {
        *w = w.max(0.0);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn single_unit(w: f64, wx: f64, wy: f64, b: f64) -> IcnnParams {
        IcnnParams::from_flat(1, 1, 1, vec![w, wx, wy, b]).unwrap()
    }

    fn random_params(seed: u64, n: usize, m: usize, k: usize) -> IcnnParams {
        let mut rng = rng_from_seed(seed);
        let mut p = IcnnParams::init(n, m, k, &mut rng);
        for v in p.as_mut_slice() {
            *v += rng.random_range(-0.5..0.5);
        }
        project_icnn(p)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn zero_params_give_zero() {
        let p = IcnnParams::zeros(2, 3, 4);
        assert_eq!(icnn_eval(&p, &[1.0, -2.0], &[0.5, 3.0, 1.0]).unwrap(), 0.0);
        assert_eq!(icnn_grad_x(&p, &[1.0, -2.0], &[0.5, 3.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_unit_values() {
        let p = single_unit(1.0, 1.0, 0.0, 0.0);
        assert_eq!(icnn_eval(&p, &[2.0], &[0.7]).unwrap(), 4.0);
        assert_eq!(icnn_eval(&p, &[-2.0], &[0.7]).unwrap(), 0.0);
        assert_eq!(icnn_grad_x(&p, &[2.0], &[0.7]).unwrap(), vec![4.0]);
    }

    #[test]
    fn single_unit_parameter_gradient() {
        let p = single_unit(1.0, 1.0, 0.0, 0.0);
        let g = icnn_backward(&p, &[2.0], &[0.0], 1.0).unwrap();
        assert_eq!(g.w(), &[4.0]);
        assert_eq!(g.wx(0), &[8.0]);
        assert_eq!(g.b(), &[4.0]);
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let p = random_params(3, 2, 2, 8);
        let g = icnn_backward(&p, &[0.3, -0.1], &[1.0, 2.0], 0.0).unwrap();
        assert!(g.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = IcnnParams::zeros(2, 1, 3);
        assert!(matches!(
            icnn_eval(&p, &[1.0], &[0.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(icnn_grad_x(&p, &[1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(IcnnParams::from_flat(2, 1, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn grad_x_matches_central_differences() {
        let h = 1e-5;
        for seed in 0..20 {
            let p = random_params(seed, 3, 2, 16);
            let mut rng = rng_from_seed(100 + seed);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = icnn_grad_x(&p, &x, &y).unwrap();
            for i in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (p.eval_unchecked(&xp, &y) - p.eval_unchecked(&xm, &y)) / (2.0 * h);
                assert!(rel_err(g[i], fd) <= 1e-6, "seed {seed} coord {i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn backward_matches_central_differences() {
        let h = 1e-5;
        for seed in 0..10 {
            let p = random_params(seed, 2, 2, 8);
            let mut rng = rng_from_seed(200 + seed);
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let upstream = 0.7;
            let g = icnn_backward(&p, &x, &y, upstream).unwrap();
            for j in 0..p.as_slice().len() {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp.as_mut_slice()[j] += h;
                pm.as_mut_slice()[j] -= h;
                let fd = upstream * (pp.eval_unchecked(&x, &y) - pm.eval_unchecked(&x, &y)) / (2.0 * h);
                assert!(rel_err(g.as_slice()[j], fd) <= 1e-6, "seed {seed} param {j}");
            }
        }
    }

    #[test]
    fn projection_examples() {
        let mut p = IcnnParams::zeros(1, 1, 2);
        p.w_mut().copy_from_slice(&[-1.0, 2.0]);
        p.wx_mut(0)[0] = -3.0;
        let q = project_icnn(p.clone());
        assert_eq!(q.w(), &[0.0, 2.0]);
        assert_eq!(q.wx(0), &[-3.0]);
        assert_eq!(project_icnn(q.clone()), q);
    }

    #[test]
    fn lipschitz_bound_for_single_unit() {
        let p = single_unit(0.5, 2.0, 1.0, 0.0);
        assert_eq!(p.gradient_lipschitz_bound(), 4.0);
    }

    #[test]
    fn midpoint_convexity_holds() {
        let mut rng = rng_from_seed(42);
        for trial in 0..1000 {
            let p = random_params(trial, 2, 2, 8);
            let draw = |rng: &mut crate::rng::Rng| -> Vec<f64> { (0..2).map(|_| rng.random_range(-3.0..3.0)).collect() };
            let (x1, x2, y) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let mid: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = p.eval_unchecked(&mid, &y);
            let rhs = 0.5 * (p.eval_unchecked(&x1, &y) + p.eval_unchecked(&x2, &y));
            assert!(lhs <= rhs + 1e-9, "trial {trial}: {lhs} > {rhs}");
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_shrinks(ws in proptest::collection::vec(-5.0f64..5.0, 1..12)) {
            let k = ws.len();
            let mut p = IcnnParams::zeros(1, 1, k);
            p.w_mut().copy_from_slice(&ws);
            let q = project_icnn(p.clone());
            prop_assert_eq!(project_icnn(q.clone()), q.clone());
            for (a, b) in q.w().iter().zip(p.w()) {
                prop_assert!(*a >= 0.0);
                prop_assert!(a.abs() <= b.abs());
            }
        }

        #[test]
        fn evaluation_is_deterministic(seed in 0u64..1000, x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let p = random_params(seed, 1, 1, 4);
            prop_assert_eq!(p.eval_unchecked(&[x], &[y]).to_bits(), p.eval_unchecked(&[x], &[y]).to_bits());
        }
    }
}
