//! Dual bounded-Lipschitz distance between two finitely supported measures,
//!
//! ```text
//! d(μ, ν) = sup { Σ g dμ - Σ g dν : |g| <= 1, |g(x) - g(x')| <= ‖x - x'‖ }.
//! ```
//!
//! The supremum equals the optimal transport cost for the truncated metric
//! `min(‖x - x'‖, 2)`. That cost is approached with log-domain Sinkhorn iterations
//! under a decreasing temperature. After each stage the dual potentials are turned
//! into an exactly feasible `g` (a sup-convolution, hence 1-Lipschitz, shifted into
//! `[-1, 1]`), which gives a lower bound. The Sinkhorn plan, rounded onto the exact
//! marginals, gives an upper bound. The solver stops once the two bounds are within
//! the tolerance and always reports the best lower bound.

use rand::seq::index;

use crate::ensemble::Ensemble;
use crate::error::{check_len, Error, Result};
use crate::rng::Rng;

pub const DEFAULT_BL_TOLERANCE: f64 = 1e-3;
/// Largest support kept per measure; larger ensembles are subsampled uniformly.
pub const DEFAULT_SUPPORT_CAP: usize = 500;

const FINAL_EPSILON: f64 = 1e-5;
const STAGE_ITERATIONS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct BLProblem {
    dim: usize,
    mu: Vec<f64>,
    mu_mass: Vec<f64>,
    nu: Vec<f64>,
    nu_mass: Vec<f64>,
    pub tolerance: f64,
    /// Either support was subsampled when the problem was built.
    pub subsampled: bool,
}

fn check_masses(points: &[f64], dim: usize, mass: &[f64], what: &'static str) -> Result<()> {
    check_len(what, points.len() / dim.max(1), mass.len())?;
    if points.is_empty() || points.len() % dim != 0 {
        return Err(Error::Invalid(format!("{what}: support must hold whole points of dimension {dim}")));
    }
    if mass.iter().any(|m| !m.is_finite() || *m < 0.0) || points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("{what}: masses and points must be finite, masses nonnegative")));
    }
    let total: f64 = mass.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("{what}: masses sum to {total}, not 1")));
    }
    Ok(())
}

impl BLProblem {
    /// Supports are flat row-major point lists of dimension `dim`.
    pub fn new(dim: usize, mu: Vec<f64>, mu_mass: Vec<f64>, nu: Vec<f64>, nu_mass: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("dimension must be positive".into()));
        }
        check_masses(&mu, dim, &mu_mass, "first measure")?;
        check_masses(&nu, dim, &nu_mass, "second measure")?;
        Ok(Self {
            dim,
            mu,
            mu_mass,
            nu,
            nu_mass,
            tolerance: DEFAULT_BL_TOLERANCE,
            subsampled: false,
        })
    }

    /// Uniform masses on both supports.
    pub fn uniform(dim: usize, mu: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        let (a, b) = (mu.len() / dim.max(1), nu.len() / dim.max(1));
        Self::new(dim, mu, vec![1.0 / a as f64; a], nu, vec![1.0 / b as f64; b])
    }

    /// Empirical measures of two ensembles, each subsampled without replacement to at
    /// most `cap` particles.
    pub fn from_ensembles(a: &Ensemble, b: &Ensemble, cap: usize, rng: &mut Rng) -> Result<Self> {
        check_len("ensemble dimension", a.dim(), b.dim())?;
        let dim = a.dim();
        let take = |e: &Ensemble, rng: &mut Rng| -> (Vec<f64>, bool) {
            if e.len() <= cap {
                return (e.as_slice().to_vec(), false);
            }
            let mut idx = index::sample(rng, e.len(), cap).into_vec();
            idx.sort_unstable();
            (idx.iter().flat_map(|&i| e.particle(i).iter().copied()).collect(), true)
        };
        let (mu, sa) = take(a, rng);
        let (nu, sb) = take(b, rng);
        let mut p = Self::uniform(dim, mu, nu)?;
        p.subsampled = sa || sb;
        Ok(p)
    }

    /// Empirical measures of two equally sized ensembles whose particles correspond
    /// index by index, as in two coupled runs. Both keep the same uniformly drawn
    /// subset of at most `cap` indices.
    pub fn from_paired_ensembles(a: &Ensemble, b: &Ensemble, cap: usize, rng: &mut Rng) -> Result<Self> {
        check_len("ensemble dimension", a.dim(), b.dim())?;
        check_len("paired ensemble size", a.len(), b.len())?;
        if a.len() <= cap {
            return Self::uniform(a.dim(), a.as_slice().to_vec(), b.as_slice().to_vec());
        }
        let mut idx = index::sample(rng, a.len(), cap).into_vec();
        idx.sort_unstable();
        let pick = |e: &Ensemble| -> Vec<f64> { idx.iter().flat_map(|&i| e.particle(i).iter().copied()).collect() };
        let mut p = Self::uniform(a.dim(), pick(a), pick(b))?;
        p.subsampled = true;
        Ok(p)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu_len(&self) -> usize {
        self.mu_mass.len()
    }

    pub fn nu_len(&self) -> usize {
        self.nu_mass.len()
    }

    /// Point `k` of the union support: the first measure's points, then the second's.
    pub fn union_point(&self, k: usize) -> &[f64] {
        let d = self.dim;
        if k < self.mu_len() {
            &self.mu[k * d..(k + 1) * d]
        } else {
            let k = k - self.mu_len();
            &self.nu[k * d..(k + 1) * d]
        }
    }

    fn objective(&self, g: &[f64]) -> f64 {
        let (a, b) = g.split_at(self.mu_len());
        a.iter().zip(&self.mu_mass).map(|(g, m)| g * m).sum::<f64>()
            - b.iter().zip(&self.nu_mass).map(|(g, m)| g * m).sum::<f64>()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Truncated-metric cost matrix between two flat supports, row-major.
fn cost(p: &BLProblem, a: &[f64], b: &[f64]) -> Vec<f64> {
    let d = p.dim;
    let mut c = Vec::with_capacity(a.len() / d * b.len() / d);
    for x in a.chunks_exact(d) {
        for y in b.chunks_exact(d) {
            c.push(dist(x, y).min(2.0));
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct BLSolution {
    /// Best certified lower bound, the reported distance.
    pub value: f64,
    /// Cost of a feasible coupling; the true distance lies in `[value, upper]`.
    pub upper: f64,
    /// `upper - value <= tolerance` was reached.
    pub converged: bool,
    /// The witness `g` on the union support (first measure, then second).
    pub witness: Vec<f64>,
}

/// Checks `|g| <= 1` and the pairwise Lipschitz constraints on the union support.
pub fn is_feasible(p: &BLProblem, g: &[f64], slack: f64) -> bool {
    let total = p.mu_len() + p.nu_len();
    if g.len() != total || g.iter().any(|v| !v.is_finite() || v.abs() > 1.0 + slack) {
        return false;
    }
    (0..total).all(|i| (i + 1..total).all(|j| (g[i] - g[j]).abs() <= dist(p.union_point(i), p.union_point(j)) + slack))
}

fn log_sum_exp(values: impl Iterator<Item = f64>, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(values);
    let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + buf.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Shifts `g` to the middle of `[-1, 1]` and clips. A function that is 1-Lipschitz
/// for the truncated metric has oscillation at most 2, so clipping only removes
/// rounding.
fn center(mut g: Vec<f64>) -> Vec<f64> {
    let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = g.iter().copied().fold(f64::INFINITY, f64::min);
    let mid = 0.5 * (max + min);
    g.iter_mut().for_each(|v| *v = (*v - mid).clamp(-1.0, 1.0));
    g
}

struct Workspace {
    c: Vec<f64>,
    c_mumu: Vec<f64>,
    c_nunu: Vec<f64>,
}

/// Feasible witnesses from the potentials: `max_i (f_i - c(., x_i))` and
/// `min_j (c(., y_j) - h_j)`; returns the better one.
fn certificate(p: &BLProblem, w: &Workspace, f: &[f64], h: &[f64]) -> (f64, Vec<f64>) {
    let (na, nb) = (p.mu_len(), p.nu_len());
    let mut g1 = Vec::with_capacity(na + nb);
    for k in 0..na {
        g1.push((0..na).map(|i| f[i] - w.c_mumu[k * na + i]).fold(f64::NEG_INFINITY, f64::max));
    }
    for j in 0..nb {
        g1.push((0..na).map(|i| f[i] - w.c[i * nb + j]).fold(f64::NEG_INFINITY, f64::max));
    }
    let mut g2 = Vec::with_capacity(na + nb);
    for i in 0..na {
        g2.push((0..nb).map(|j| w.c[i * nb + j] - h[j]).fold(f64::INFINITY, f64::min));
    }
    for k in 0..nb {
        g2.push((0..nb).map(|j| w.c_nunu[k * nb + j] - h[j]).fold(f64::INFINITY, f64::min));
    }
    let (g1, g2) = (center(g1), center(g2));
    let (v1, v2) = (p.objective(&g1), p.objective(&g2));
    if v1 >= v2 {
        (v1, g1)
    } else {
        (v2, g2)
    }
}

/// Cost of the entropic plan after rounding it onto the exact marginals.
fn rounded_plan_cost(p: &BLProblem, w: &Workspace, f: &[f64], h: &[f64], eps: f64) -> f64 {
    let (na, nb) = (p.mu_len(), p.nu_len());
    let mut plan = vec![0.0; na * nb];
    for i in 0..na {
        for j in 0..nb {
            plan[i * nb + j] = p.mu_mass[i] * p.nu_mass[j] * ((f[i] + h[j] - w.c[i * nb + j]) / eps).exp();
        }
    }
    for i in 0..na {
        let row = &mut plan[i * nb..(i + 1) * nb];
        let s: f64 = row.iter().sum();
        if s > p.mu_mass[i] {
            let r = p.mu_mass[i] / s;
            row.iter_mut().for_each(|v| *v *= r);
        }
    }
    for j in 0..nb {
        let s: f64 = (0..na).map(|i| plan[i * nb + j]).sum();
        if s > p.nu_mass[j] {
            let r = p.nu_mass[j] / s;
            (0..na).for_each(|i| plan[i * nb + j] *= r);
        }
    }
    let err_r: Vec<f64> = (0..na)
        .map(|i| (p.mu_mass[i] - plan[i * nb..(i + 1) * nb].iter().sum::<f64>()).max(0.0))
        .collect();
    let err_c: Vec<f64> = (0..nb)
        .map(|j| (p.nu_mass[j] - (0..na).map(|i| plan[i * nb + j]).sum::<f64>()).max(0.0))
        .collect();
    let total: f64 = err_r.iter().sum();
    let mut cost: f64 = plan.iter().zip(&w.c).map(|(a, b)| a * b).sum();
    if total > 0.0 {
        for i in 0..na {
            for j in 0..nb {
                cost += err_r[i] * err_c[j] / total * w.c[i * nb + j];
            }
        }
    }
    cost
}

pub fn bl_distance(p: &BLProblem) -> BLSolution {
    let (na, nb) = (p.mu_len(), p.nu_len());
    let w = Workspace {
        c: cost(p, &p.mu, &p.nu),
        c_mumu: cost(p, &p.mu, &p.mu),
        c_nunu: cost(p, &p.nu, &p.nu),
    };
    let log_a: Vec<f64> = p.mu_mass.iter().map(|m| m.ln()).collect();
    let log_b: Vec<f64> = p.nu_mass.iter().map(|m| m.ln()).collect();
    let mut f = vec![0.0; na];
    let mut h = vec![0.0; nb];
    let mut buf = Vec::with_capacity(na.max(nb));
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut upper = f64::INFINITY;

    let mut eps = 1.0;
    loop {
        for it in 0..STAGE_ITERATIONS {
            for j in 0..nb {
                h[j] = -eps * log_sum_exp((0..na).map(|i| log_a[i] + (f[i] - w.c[i * nb + j]) / eps), &mut buf);
            }
            for i in 0..na {
                f[i] = -eps * log_sum_exp((0..nb).map(|j| log_b[j] + (h[j] - w.c[i * nb + j]) / eps), &mut buf);
            }
            if it % 10 == 9 {
                // Rows are exact after the f update; measure the column marginal error.
                let err: f64 = (0..nb)
                    .map(|j| {
                        let s: f64 = (0..na)
                            .map(|i| p.mu_mass[i] * p.nu_mass[j] * ((f[i] + h[j] - w.c[i * nb + j]) / eps).exp())
                            .sum();
                        (s - p.nu_mass[j]).abs()
                    })
                    .sum();
                if err < 0.1 * p.tolerance {
                    break;
                }
            }
        }
        let (lb, g) = certificate(p, &w, &f, &h);
        if lb > best.0 {
            best = (lb, g);
        }
        upper = upper.min(rounded_plan_cost(p, &w, &f, &h, eps));
        if upper - best.0 <= p.tolerance || eps <= FINAL_EPSILON {
            break;
        }
        eps *= 0.5;
    }
    BLSolution {
        value: best.0,
        upper,
        converged: upper - best.0 <= p.tolerance,
        witness: best.1,
    }
}
