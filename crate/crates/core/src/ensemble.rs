use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, numbered, write_row};
use crate::rng::{fill_standard_normal, Rng};

/// `N` particles in `R^n` at time index `t`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    n: usize,
    pub t: usize,
    data: Vec<f64>,
}

impl Ensemble {
    pub fn new(n: usize, t: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.is_empty() || data.len() % n != 0 {
            return Err(Error::Invalid(format!(
                "ensemble data of length {} does not hold whole particles of dimension {n}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ensemble"));
        }
        Ok(Self { n, t, data })
    }

    pub fn from_particles(t: usize, particles: &[Vec<f64>]) -> Result<Self> {
        let n = particles.first().map_or(0, Vec::len);
        if particles.iter().any(|p| p.len() != n) {
            return Err(Error::Invalid("particles of unequal dimension".into()));
        }
        Self::new(n, t, particles.concat())
    }

    /// `N` i.i.d. draws from `N(mean, std^2 I)`.
    pub fn gaussian(mean: &[f64], std: f64, count: usize, rng: &mut Rng) -> Self {
        let n = mean.len();
        let mut data = vec![0.0; n * count];
        fill_standard_normal(rng, &mut data);
        for row in data.chunks_exact_mut(n) {
            for (v, m) in row.iter_mut().zip(mean) {
                *v = m + std * *v;
            }
        }
        Self { n, t: 0, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of particles `N`.
    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn particle_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn particles(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n];
        for p in self.particles() {
            for (a, b) in m.iter_mut().zip(p) {
                *a += b;
            }
        }
        let inv = 1.0 / self.len() as f64;
        m.iter_mut().for_each(|v| *v *= inv);
        m
    }

    /// Unbiased sample covariance, row-major `n x n`.
    pub fn covariance(&self) -> Vec<f64> {
        let n = self.n;
        let mean = self.mean();
        let mut c = vec![0.0; n * n];
        for p in self.particles() {
            for i in 0..n {
                for j in 0..n {
                    c[i * n + j] += (p[i] - mean[i]) * (p[j] - mean[j]);
                }
            }
        }
        let denom = (self.len().max(2) - 1) as f64;
        c.iter_mut().for_each(|v| *v /= denom);
        c
    }

    /// Coordinate `axis` of every particle.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        self.particles().map(|p| p[axis]).collect()
    }

    /// CSV rows `t,particle,x_1..x_n`; `header` controls whether the header line is written.
    pub fn write_csv<W: Write>(&self, out: &mut W, header: bool) -> std::io::Result<()> {
        if header {
            let h: Vec<String> = ["t".to_string(), "particle".to_string()]
                .into_iter()
                .chain(numbered("x", self.n))
                .collect();
            write_row(out, &h)?;
        }
        for (i, p) in self.particles().enumerate() {
            let row: Vec<String> = [self.t.to_string(), i.to_string()]
                .into_iter()
                .chain(p.iter().map(|v| fmt_f64(*v)))
                .collect();
            write_row(out, &row)?;
        }
        Ok(())
    }
}
