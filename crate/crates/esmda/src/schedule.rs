use serde::{Deserialize, Serialize};

use crate::error::{EsmdaError, Result};

/// Per-iteration inflation coefficients. Consistency with the single-step
/// ensemble smoother in the linear-Gaussian case requires
/// `sum_i 1/alpha_i = 1`; the constructor enforces it to 1e-12.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflationSchedule {
    alphas: Vec<f64>,
}

impl InflationSchedule {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(EsmdaError::Config("schedule must have at least one iteration".into()));
        }
        if alphas.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(EsmdaError::Config("inflation coefficients must be positive".into()));
        }
        let inv_sum: f64 = alphas.iter().map(|a| 1.0 / a).sum();
        if (inv_sum - 1.0).abs() > 1e-12 {
            return Err(EsmdaError::Config(format!(
                "sum of 1/alpha_i must be 1, got {inv_sum}"
            )));
        }
        Ok(Self { alphas })
    }

    /// `N_a` iterations with the constant coefficient `alpha_i = N_a`.
    pub fn uniform(n_a: usize) -> Result<Self> {
        if n_a == 0 {
            return Err(EsmdaError::Config("need at least one iteration".into()));
        }
        Self::new(vec![n_a as f64; n_a])
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn n_iterations(&self) -> usize {
        self.alphas.len()
    }

    /// Total forward evaluations scheduled by [`crate::run_esmda`] for an
    /// ensemble of `n_e` members: one sweep per iteration plus the final
    /// re-evaluation, `N_e * (N_a + 1)`.
    pub fn planned_evaluations(&self, n_e: usize) -> usize {
        n_e * (self.n_iterations() + 1)
    }
}
