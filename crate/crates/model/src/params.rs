use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Layout of the flat inversion parameter vector `[z | sl | ss]`:
/// latent variables, the two source-location coordinates, and one release
/// strength per stress period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub latent_len: usize,
    pub n_re: usize,
}

impl ParamLayout {
    pub fn new(latent_len: usize, n_re: usize) -> Self {
        Self { latent_len, n_re }
    }

    /// Total number of unknowns `N_m = L_z + 2 + N_re`.
    pub fn n_params(&self) -> usize {
        self.latent_len + 2 + self.n_re
    }

    pub fn z_range(&self) -> std::ops::Range<usize> {
        0..self.latent_len
    }

    pub fn sl_range(&self) -> std::ops::Range<usize> {
        self.latent_len..self.latent_len + 2
    }

    pub fn ss_range(&self) -> std::ops::Range<usize> {
        self.latent_len + 2..self.n_params()
    }

    pub fn pack(&self, z: &[f64], sl: [f64; 2], ss: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_len {
            return Err(ModelError::Layout(format!(
                "latent length {} does not match layout ({})",
                z.len(),
                self.latent_len
            )));
        }
        if ss.len() != self.n_re {
            return Err(ModelError::Layout(format!(
                "strength count {} does not match layout ({})",
                ss.len(),
                self.n_re
            )));
        }
        let mut flat = Vec::with_capacity(self.n_params());
        flat.extend_from_slice(z);
        flat.extend_from_slice(&sl);
        flat.extend_from_slice(ss);
        Ok(flat)
    }

    pub fn unpack<'a>(&self, flat: &'a [f64]) -> Result<(&'a [f64], [f64; 2], &'a [f64])> {
        if flat.len() != self.n_params() {
            return Err(ModelError::Layout(format!(
                "flat length {} does not match layout ({})",
                flat.len(),
                self.n_params()
            )));
        }
        let z = &flat[self.z_range()];
        let sl = [flat[self.latent_len], flat[self.latent_len + 1]];
        let ss = &flat[self.ss_range()];
        Ok((z, sl, ss))
    }
}
