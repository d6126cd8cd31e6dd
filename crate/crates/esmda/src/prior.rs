use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use gwinv_model::ParamLayout;

use crate::error::{EsmdaError, Result};

/// Prior over the inversion parameters: standard-normal latent block plus
/// independent uniform source location and strengths. The bounds double as
/// the clamping support applied after each update (the latent block stays
/// unbounded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub layout: ParamLayout,
    /// Uniform bounds on the source x coordinate (m).
    pub sl_x: (f64, f64),
    /// Uniform bounds on the source y coordinate (m).
    pub sl_y: (f64, f64),
    /// Uniform bounds on each release strength (g/m³).
    pub ss: (f64, f64),
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("sl_x", self.sl_x), ("sl_y", self.sl_y), ("ss", self.ss)] {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(EsmdaError::Config(format!("invalid {name} bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Draws `n_e` independent members as columns of an `N_m x N_e` matrix,
    /// reproducibly per seed.
    pub fn sample(&self, n_e: usize, seed: u64) -> Result<Array2<f64>> {
        self.validate()?;
        if n_e == 0 {
            return Err(EsmdaError::Config("ensemble size must be positive".into()));
        }
        let n_m = self.layout.n_params();
        let mut m = Array2::<f64>::zeros((n_m, n_e));
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let uniform = |rng: &mut ChaCha12Rng, (lo, hi): (f64, f64)| -> f64 {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        for j in 0..n_e {
            for i in self.layout.z_range() {
                m[[i, j]] = StandardNormal.sample(&mut rng);
            }
            let sl = self.layout.sl_range().start;
            m[[sl, j]] = uniform(&mut rng, self.sl_x);
            m[[sl + 1, j]] = uniform(&mut rng, self.sl_y);
            for i in self.layout.ss_range() {
                m[[i, j]] = uniform(&mut rng, self.ss);
            }
        }
        Ok(m)
    }

    /// Clamps the source-location and strength blocks of every member to the
    /// prior support; latent values pass through unchanged.
    pub fn clamp(&self, m: &mut Array2<f64>) {
        let sl = self.layout.sl_range().start;
        for j in 0..m.ncols() {
            m[[sl, j]] = m[[sl, j]].clamp(self.sl_x.0, self.sl_x.1);
            m[[sl + 1, j]] = m[[sl + 1, j]].clamp(self.sl_y.0, self.sl_y.1);
            for i in self.layout.ss_range() {
                m[[i, j]] = m[[i, j]].clamp(self.ss.0, self.ss.1);
            }
        }
    }

    /// Draws a single fresh member (used when a forward evaluation fails).
    pub fn sample_one(&self, seed: u64) -> Result<Vec<f64>> {
        let m = self.sample(1, seed)?;
        Ok(m.column(0).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table4_prior(latent: usize) -> PriorSpec {
        PriorSpec {
            layout: ParamLayout::new(latent, 5),
            sl_x: (125.0, 625.0),
            sl_y: (125.0, 1125.0),
            ss: (50.0, 1000.0),
        }
    }

    #[test]
    fn collapsed_bounds_give_constant_ensemble() {
        let prior = PriorSpec {
            layout: ParamLayout::new(0, 2),
            sl_x: (300.0, 300.0),
            sl_y: (500.0, 500.0),
            ss: (100.0, 100.0),
        };
        let m = prior.sample(16, 1).unwrap();
        for j in 0..16 {
            assert_eq!(m.column(j).to_vec(), vec![300.0, 500.0, 100.0, 100.0]);
        }
    }

    #[test]
    fn sl_x_mean_matches_uniform() {
        let prior = table4_prior(2);
        let m = prior.sample(10_000, 3).unwrap();
        let row = prior.layout.sl_range().start;
        let mean = m.row(row).mean().unwrap();
        assert!((mean - 375.0).abs() < 0.01 * 375.0, "mean {mean}");
    }

    #[test]
    fn latent_block_is_standard_normal() {
        let prior = table4_prior(8);
        let m = prior.sample(10_000, 4).unwrap();
        for i in prior.layout.z_range() {
            let row = m.row(i);
            let mean = row.mean().unwrap();
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (row.len() as f64 - 1.0);
            assert!(mean.abs() < 0.05, "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn clamp_restores_support() {
        let prior = table4_prior(2);
        let mut m = prior.sample(4, 5).unwrap();
        m[[2, 0]] = 2000.0; // sl_x above bound
        m[[3, 1]] = -10.0; // sl_y below bound
        m[[4, 2]] = 1e6; // ss above bound
        m[[0, 3]] = 42.0; // latent untouched
        prior.clamp(&mut m);
        assert_eq!(m[[2, 0]], 625.0);
        assert_eq!(m[[3, 1]], 125.0);
        assert_eq!(m[[4, 2]], 1000.0);
        assert_eq!(m[[0, 3]], 42.0);
    }

    #[test]
    fn sampling_is_reproducible() {
        let prior = table4_prior(4);
        let a = prior.sample(32, 9).unwrap();
        let b = prior.sample(32, 9).unwrap();
        assert_eq!(a, b);
    }
}
