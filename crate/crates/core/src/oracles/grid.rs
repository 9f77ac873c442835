use std::io::Write;

use crate::error::{check_len, Error, Result};
use crate::io::{fmt_f64, numbered, write_row};
use crate::ssm::ModelSpec;

pub const DEFAULT_GRID_1D: usize = 2048;
pub const DEFAULT_GRID_2D: usize = 256;
pub const DEFAULT_HALF_WIDTH: f64 = 6.0;

/// A density on a uniform tensor grid over `[-L, L]^n`, `n <= 2`.
///
/// Values are stored row-major (the last axis varies fastest). Each axis is built as
/// `L (2i - (P-1)) / (P-1)` so that point `P-1-i` is exactly the negation of point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBelief {
    axes: Vec<Vec<f64>>,
    density: Vec<f64>,
    cell_volume: f64,
}

fn axis(points: usize, half_width: f64) -> Vec<f64> {
    let last = (points - 1) as f64;
    (0..points)
        .map(|i| half_width * (2.0 * i as f64 - last) / last)
        .collect()
}

impl GridBelief {
    /// Grid with `points` points per axis in `dim` dimensions, density proportional to `f`.
    pub fn from_fn(dim: usize, points: usize, half_width: f64, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Unsupported {
                what: "grid belief",
                requirement: "state dimension 1 or 2",
            });
        }
        if points < 2 || half_width <= 0.0 {
            return Err(Error::Invalid("grid needs at least two points and a positive width".into()));
        }
        let ax = axis(points, half_width);
        let h = ax[1] - ax[0];
        let mut g = Self {
            axes: vec![ax; dim],
            density: Vec::new(),
            cell_volume: h.powi(dim as i32),
        };
        let mut p = vec![0.0; dim];
        g.density = (0..g.len())
            .map(|idx| {
                g.point_into(idx, &mut p);
                f(&p)
            })
            .collect();
        if g.density.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid("grid density must be finite and nonnegative".into()));
        }
        g.normalize()?;
        Ok(g)
    }

    /// `N(0, I)` on the default grid for `dim`.
    pub fn standard(dim: usize) -> Result<Self> {
        let points = if dim == 1 { DEFAULT_GRID_1D } else { DEFAULT_GRID_2D };
        Self::from_fn(dim, points, DEFAULT_HALF_WIDTH, |x| {
            (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp()
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        &self.axes[i]
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    fn point_into(&self, mut idx: usize, out: &mut [f64]) {
        for d in (0..self.dim()).rev() {
            let len = self.axes[d].len();
            out[d] = self.axes[d][idx % len];
            idx /= len;
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point_into(idx, &mut p);
        p
    }

    fn normalize(&mut self) -> Result<()> {
        let mass: f64 = self.density.iter().sum::<f64>() * self.cell_volume;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::MassUnderflow("grid posterior"));
        }
        let inv = 1.0 / mass;
        self.density.iter_mut().for_each(|v| *v *= inv);
        Ok(())
    }

    /// Probability mass of each point along `axis` after summing out the others.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let len = self.axes[axis].len();
        let mut out = vec![0.0; len];
        let stride: usize = self.axes[axis + 1..].iter().map(Vec::len).product();
        for (idx, v) in self.density.iter().enumerate() {
            out[(idx / stride) % len] += v * self.cell_volume;
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|d| self.marginal(d).iter().zip(&self.axes[d]).map(|(w, x)| w * x).sum())
            .collect()
    }

    /// Per-axis variance.
    pub fn variance(&self) -> Vec<f64> {
        self.mean()
            .iter()
            .enumerate()
            .map(|(d, m)| {
                self.marginal(d)
                    .iter()
                    .zip(&self.axes[d])
                    .map(|(w, x)| w * (x - m) * (x - m))
                    .sum()
            })
            .collect()
    }

    /// Mass strictly on the positive side of `axis`.
    pub fn positive_mass(&self, axis: usize) -> f64 {
        self.marginal(axis)
            .iter()
            .zip(&self.axes[axis])
            .filter(|(_, x)| **x > 0.0)
            .map(|(w, _)| w)
            .sum()
    }

    /// `max |π(x) - π(-x)|` over the grid.
    pub fn symmetry_defect(&self) -> f64 {
        let len = self.density.len();
        (0..len)
            .map(|i| (self.density[i] - self.density[len - 1 - i]).abs())
            .fold(0.0, f64::max)
    }

    /// CSV rows `x_1..x_n,density`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let header: Vec<String> = numbered("x", self.dim()).chain(["density".to_string()]).collect();
        write_row(out, &header)?;
        let mut p = vec![0.0; self.dim()];
        for (idx, v) in self.density.iter().enumerate() {
            self.point_into(idx, &mut p);
            let row: Vec<String> = p.iter().chain([v]).map(|v| fmt_f64(*v)).collect();
            write_row(out, &row)?;
        }
        Ok(())
    }
}

/// `K[i][j] = N(x_i; (1-α) x_j, 4σ²) h`, row-major.
fn transition_matrix(ax: &[f64], spec: &ModelSpec) -> Vec<f64> {
    let len = ax.len();
    let h = ax[1] - ax[0];
    let var = spec.process_variance();
    let scale = h / (2.0 * std::f64::consts::PI * var).sqrt();
    let decay = 1.0 - spec.alpha;
    let mut k = vec![0.0; len * len];
    for (i, xi) in ax.iter().enumerate() {
        for (j, xj) in ax.iter().enumerate() {
            let r = xi - decay * xj;
            k[i * len + j] = scale * (-0.5 * r * r / var).exp();
        }
    }
    k
}

/// Applies the 1D kernel along `axis` of the row-major array `data`.
fn apply_along(data: &[f64], shape: &[usize], axis: usize, k: &[f64]) -> Vec<f64> {
    let len = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; data.len()];
    let mut line = vec![0.0; len];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * len * stride + s;
            for (j, l) in line.iter_mut().enumerate() {
                *l = data[base + j * stride];
            }
            for i in 0..len {
                let row = &k[i * len..(i + 1) * len];
                out[base + i * stride] = row.iter().zip(&line).map(|(a, b)| a * b).sum();
            }
        }
    }
    out
}

/// Propagate through the dynamics by direct kernel summation, condition on `y`,
/// renormalize. Mass carried past the grid edge is lost before renormalization.
pub fn grid_filter_step(b: &GridBelief, y: &[f64], spec: &ModelSpec) -> Result<GridBelief> {
    check_len("grid dimension", spec.n, b.dim())?;
    check_len("observation", spec.m, y.len())?;
    let shape: Vec<usize> = b.axes.iter().map(Vec::len).collect();
    let mut density = b.density.clone();
    for d in 0..b.dim() {
        let k = transition_matrix(&b.axes[d], spec);
        density = apply_along(&density, &shape, d, &k);
    }
    let mut p = vec![0.0; b.dim()];
    let mut loglik = Vec::with_capacity(density.len());
    for idx in 0..density.len() {
        b.point_into(idx, &mut p);
        loglik.push(spec.log_likelihood_unchecked(y, &p));
    }
    let max = loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::MassUnderflow("grid likelihood"));
    }
    for (v, l) in density.iter_mut().zip(&loglik) {
        *v *= (l - max).exp();
    }
    let mut out = GridBelief {
        axes: b.axes.clone(),
        density,
        cell_volume: b.cell_volume,
    };
    out.normalize()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::kalman::{kalman_step, GaussianBelief};
    use crate::ObsKind;

    #[test]
    fn axis_is_antisymmetric() {
        let ax = axis(2048, 6.0);
        assert_eq!(ax[0], -6.0);
        assert_eq!(ax[2047], 6.0);
        for i in 0..2048 {
            assert_eq!(ax[i], -ax[2047 - i]);
        }
    }

    #[test]
    fn normalized_nonnegative() {
        let g = GridBelief::standard(2).unwrap();
        assert_eq!(g.len(), 256 * 256);
        let mass: f64 = g.density().iter().sum::<f64>() * g.cell_volume();
        assert!((mass - 1.0).abs() < 1e-12);
        let spec = ModelSpec::benchmark(2, ObsKind::Cubic);
        let g = grid_filter_step(&g, &[0.5, -2.0], &spec).unwrap();
        let mass: f64 = g.density().iter().sum::<f64>() * g.cell_volume();
        assert!((mass - 1.0).abs() < 1e-8);
        assert!(g.density().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn flat_likelihood_is_propagation_only() {
        let spec = ModelSpec::benchmark(1, ObsKind::Zero);
        let g = GridBelief::from_fn(1, 512, 6.0, |_| 1.0).unwrap();
        let out = grid_filter_step(&g, &[3.0], &spec).unwrap();
        let k = transition_matrix(g.axis(0), &spec);
        let mut prop = apply_along(g.density(), &[512], 0, &k);
        let mass: f64 = prop.iter().sum::<f64>() * g.cell_volume();
        prop.iter_mut().for_each(|v| *v /= mass);
        for (a, b) in out.density().iter().zip(&prop) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_matches_kalman() {
        let spec = ModelSpec::benchmark(1, ObsKind::Linear);
        let mut g = GridBelief::standard(1).unwrap();
        let mut k = GaussianBelief::standard(1);
        for y in [0.4, -1.0, 1.7, 0.2, -0.3] {
            g = grid_filter_step(&g, &[y], &spec).unwrap();
            k = kalman_step(&k, &[y], &spec).unwrap();
            assert!((g.mean()[0] - k.mean[0]).abs() < 1e-3);
            assert!((g.variance()[0] - k.covariance[(0, 0)]).abs() < 1e-3);
        }
    }

    #[test]
    fn separable_two_dimensional_matches_kalman() {
        let spec = ModelSpec::benchmark(2, ObsKind::Linear);
        let mut g = GridBelief::standard(2).unwrap();
        let mut k = GaussianBelief::standard(2);
        for y in [[0.4, -1.0], [1.2, 0.3]] {
            g = grid_filter_step(&g, &y, &spec).unwrap();
            k = kalman_step(&k, &y, &spec).unwrap();
        }
        for d in 0..2 {
            assert!((g.mean()[d] - k.mean[d]).abs() < 1e-3);
            assert!((g.variance()[d] - k.covariance[(d, d)]).abs() < 1e-3);
        }
    }

    #[test]
    fn quadratic_posterior_is_symmetric() {
        let spec = ModelSpec::benchmark(1, ObsKind::Quadratic);
        let mut g = GridBelief::standard(1).unwrap();
        for y in [4.0, 3.5, 4.2, 3.9, 4.1, 3.0, 4.4, 3.8] {
            g = grid_filter_step(&g, &[y], &spec).unwrap();
            assert!(g.symmetry_defect() <= 1e-12);
        }
        assert!((g.positive_mass(0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn underflow_is_reported() {
        let spec = ModelSpec::benchmark(1, ObsKind::Linear);
        // Prior mass far left, observation far right: the likelihood peaks at the
        // right edge where the propagated density is exactly zero.
        let g = GridBelief::from_fn(1, 256, 20.0, |x| if x[0] < -19.0 { 1.0 } else { 0.0 }).unwrap();
        assert!(matches!(grid_filter_step(&g, &[1e6], &spec), Err(Error::MassUnderflow(_))));
    }

    #[test]
    fn rejects_three_dimensions() {
        assert!(GridBelief::from_fn(3, 8, 1.0, |_| 1.0).is_err());
    }
}
