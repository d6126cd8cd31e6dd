//! Sensor network, measurement operator and observation noise.
//!
//! The data vector is ordered `[c(t_1) by sensor | ... | c(t_I) by sensor |
//! h by sensor]`; head is measured once since the flow is steady, so
//! `N_d = M * (I + 1)`.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::field::ScalarField;
use crate::grid::Grid3;

/// Sensor cells plus the concentration observation times (d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellNetwork {
    sensors: Vec<[usize; 3]>,
    times: Vec<f64>,
}

impl WellNetwork {
    pub fn new(sensors: Vec<[usize; 3]>, times: Vec<f64>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for s in &sensors {
            if !seen.insert(*s) {
                return Err(ModelError::Layout(format!("duplicate sensor cell {s:?}")));
            }
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::Layout("observation times must be strictly increasing".into()));
        }
        Ok(Self { sensors, times })
    }

    pub fn sensors(&self) -> &[[usize; 3]] {
        &self.sensors
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// Total measurement count `N_d = M * (I + 1)`.
    pub fn n_data(&self) -> usize {
        self.n_sensors() * (self.n_times() + 1)
    }

    pub fn check_in_grid(&self, grid: &Grid3) -> Result<()> {
        for s in &self.sensors {
            if s[0] >= grid.nx || s[1] >= grid.ny || s[2] >= grid.nz {
                return Err(ModelError::Layout(format!(
                    "sensor {s:?} outside grid {}x{}x{}",
                    grid.nx, grid.ny, grid.nz
                )));
            }
        }
        Ok(())
    }
}

/// Independent Gaussian measurement noise per data kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Concentration noise standard deviation (g/m³).
    pub sigma_c: f64,
    /// Head noise standard deviation (m).
    pub sigma_h: f64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_c < 0.0 || self.sigma_h < 0.0 {
            return Err(ModelError::Domain("noise standard deviations must be >= 0".into()));
        }
        Ok(())
    }

    /// Diagonal measurement-error covariance in data ordering.
    pub fn covariance(&self, wells: &WellNetwork) -> NoiseCov {
        let m = wells.n_sensors();
        let i = wells.n_times();
        let mut diag = Vec::with_capacity(wells.n_data());
        diag.extend(std::iter::repeat(self.sigma_c * self.sigma_c).take(m * i));
        diag.extend(std::iter::repeat(self.sigma_h * self.sigma_h).take(m));
        NoiseCov::Diag(Array1::from(diag))
    }
}

/// Measurement-error covariance: diagonal in the reference experiments, a
/// full matrix when spatially correlated errors are configured.
#[derive(Debug, Clone)]
pub enum NoiseCov {
    Diag(Array1<f64>),
    Full(Array2<f64>),
}

impl NoiseCov {
    pub fn n(&self) -> usize {
        match self {
            NoiseCov::Diag(d) => d.len(),
            NoiseCov::Full(m) => m.nrows(),
        }
    }

    /// Lower-triangular factor L with C = L L^T, used to draw samples.
    /// For the diagonal case this is just the per-entry standard deviation.
    fn chol_factor(&self) -> Result<CholFactor> {
        match self {
            NoiseCov::Diag(d) => {
                if d.iter().any(|&v| v < 0.0) {
                    return Err(ModelError::Domain("negative noise variance".into()));
                }
                Ok(CholFactor::Diag(d.mapv(f64::sqrt)))
            }
            NoiseCov::Full(c) => {
                let n = c.nrows();
                if c.ncols() != n {
                    return Err(ModelError::Layout("covariance must be square".into()));
                }
                let mut l = Array2::<f64>::zeros((n, n));
                for i in 0..n {
                    for j in 0..=i {
                        let mut sum = c[[i, j]];
                        for k in 0..j {
                            sum -= l[[i, k]] * l[[j, k]];
                        }
                        if i == j {
                            if sum <= 0.0 {
                                return Err(ModelError::Numeric(
                                    "noise covariance is not positive definite".into(),
                                ));
                            }
                            l[[i, j]] = sum.sqrt();
                        } else {
                            l[[i, j]] = sum / l[[j, j]];
                        }
                    }
                }
                Ok(CholFactor::Full(l))
            }
        }
    }
}

enum CholFactor {
    Diag(Array1<f64>),
    Full(Array2<f64>),
}

impl CholFactor {
    fn apply(&self, eps: &[f64], out: &mut [f64]) {
        match self {
            CholFactor::Diag(s) => {
                for (o, (e, si)) in out.iter_mut().zip(eps.iter().zip(s.iter())) {
                    *o = e * si;
                }
            }
            CholFactor::Full(l) => {
                let n = l.nrows();
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += l[[i, j]] * eps[j];
                    }
                    out[i] = acc;
                }
            }
        }
    }
}

/// Where an observation vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Clean,
    Corrupted { seed: u64 },
}

/// A flat measurement vector in the documented ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub data: Vec<f64>,
    pub n_sensors: usize,
    pub n_times: usize,
    pub provenance: Provenance,
}

impl ObservationSet {
    pub fn n_data(&self) -> usize {
        self.n_sensors * (self.n_times + 1)
    }
}

/// Gathers simulated fields into the data vector
/// `[c(t_1) by sensor | ... | c(t_I) by sensor | h by sensor]`.
pub fn observe(snapshots: &[ScalarField], head: &ScalarField, wells: &WellNetwork) -> Result<ObservationSet> {
    if snapshots.len() != wells.n_times() {
        return Err(ModelError::Layout(format!(
            "snapshot count {} does not match observation times {}",
            snapshots.len(),
            wells.n_times()
        )));
    }
    let grid = head.grid();
    wells.check_in_grid(&grid)?;
    let mut data = Vec::with_capacity(wells.n_data());
    for snap in snapshots {
        snap.same_grid(head)?;
        for s in wells.sensors() {
            data.push(snap.get(s[0], s[1], s[2]));
        }
    }
    for s in wells.sensors() {
        data.push(head.get(s[0], s[1], s[2]));
    }
    Ok(ObservationSet {
        data,
        n_sensors: wells.n_sensors(),
        n_times: wells.n_times(),
        provenance: Provenance::Clean,
    })
}

/// Corrupts a clean observation vector with N(0, C_D) noise, reproducibly
/// per seed.
pub fn add_noise(obs: &ObservationSet, noise: &NoiseModel, wells: &WellNetwork, seed: u64) -> Result<ObservationSet> {
    noise.validate()?;
    if obs.n_data() != wells.n_data() {
        return Err(ModelError::Layout("observation length does not match well network".into()));
    }
    let cov = noise.covariance(wells);
    let chol = cov.chol_factor()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let eps: Vec<f64> = (0..obs.data.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut corr = vec![0.0; obs.data.len()];
    chol.apply(&eps, &mut corr);
    let data = obs.data.iter().zip(&corr).map(|(d, e)| d + e).collect();
    Ok(ObservationSet {
        data,
        n_sensors: obs.n_sensors,
        n_times: obs.n_times,
        provenance: Provenance::Corrupted { seed },
    })
}

/// Draws `n_e` perturbed copies `d + sqrt(alpha) * eps_j`, `eps_j ~ N(0, C_D)`,
/// as columns of an `N_d x N_e` matrix.
pub fn perturb_observations(
    d: &[f64],
    alpha: f64,
    cov: &NoiseCov,
    n_e: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    if alpha <= 0.0 {
        return Err(ModelError::Domain(format!("inflation must be positive, got {alpha}")));
    }
    if cov.n() != d.len() {
        return Err(ModelError::Layout(format!(
            "covariance size {} does not match data length {}",
            cov.n(),
            d.len()
        )));
    }
    let chol = cov.chol_factor()?;
    let sqrt_alpha = alpha.sqrt();
    let n_d = d.len();
    let mut out = Array2::<f64>::zeros((n_d, n_e));
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut eps = vec![0.0; n_d];
    let mut corr = vec![0.0; n_d];
    for j in 0..n_e {
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        chol.apply(&eps, &mut corr);
        for i in 0..n_d {
            out[[i, j]] = d[i] + sqrt_alpha * corr[i];
        }
    }
    Ok(out)
}
