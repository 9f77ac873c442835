use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Descent,
    Ascent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Bias-corrected ADAM moments for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.first, &self.second)
    }

    pub fn from_parts(config: AdamConfig, first: Vec<f64>, second: Vec<f64>, step: u64) -> Result<Self> {
        check_len("ADAM second moments", first.len(), second.len())?;
        if second.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || first.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ADAM moments"));
        }
        Ok(Self {
            config,
            first,
            second,
            step,
        })
    }

    /// One ADAM update of `params` in place. Ascent moves along `+grad`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], direction: Direction) -> Result<()> {
        check_len("ADAM parameter vector", self.first.len(), params.len())?;
        check_len("ADAM gradient vector", self.first.len(), grads.len())?;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let sign = match direction {
            Direction::Descent => -1.0,
            Direction::Ascent => 1.0,
        };
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p += sign * learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}
