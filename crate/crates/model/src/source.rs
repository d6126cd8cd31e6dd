use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::field::ScalarField;
use crate::grid::Grid3;

/// Point-source release configuration: a continuous plan-view location, a
/// fixed layer, and one strength per stress period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Release x coordinate (m), continuous.
    pub sl_x: f64,
    /// Release y coordinate (m), continuous.
    pub sl_y: f64,
    /// Vertical cell index of the source (0 = top layer).
    pub layer: usize,
    /// Release start time (d).
    pub t0: f64,
    /// Stress-period length (d).
    pub period_len: f64,
    /// Release strength per stress period (g/m³); the period count is
    /// `strengths.len()`.
    pub strengths: Vec<f64>,
    /// Volumetric injection rate per unit cell volume while active (1/d).
    pub q_s: f64,
}

impl SourceConfig {
    pub fn n_re(&self) -> usize {
        self.strengths.len()
    }

    /// Total release duration (d).
    pub fn duration(&self) -> f64 {
        self.n_re() as f64 * self.period_len
    }

    pub fn validate(&self, grid: &Grid3) -> Result<()> {
        if !(self.sl_x >= 0.0 && self.sl_x < grid.lx && self.sl_y >= 0.0 && self.sl_y < grid.ly) {
            return Err(ModelError::Domain(format!(
                "source location ({}, {}) outside domain {} x {}",
                self.sl_x, self.sl_y, grid.lx, grid.ly
            )));
        }
        if self.layer >= grid.nz {
            return Err(ModelError::Domain(format!(
                "source layer {} outside grid with {} layers",
                self.layer, grid.nz
            )));
        }
        if self.period_len <= 0.0 {
            return Err(ModelError::Domain("stress-period length must be positive".into()));
        }
        if self.strengths.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(ModelError::Domain("release strengths must be finite and >= 0".into()));
        }
        if self.q_s < 0.0 {
            return Err(ModelError::Domain("injection rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// Maps a continuous (x, y) location plus a layer index to cell indices.
pub fn locate_cell(x: f64, y: f64, layer: usize, grid: &Grid3) -> Result<(usize, usize, usize)> {
    if !(x >= 0.0 && x < grid.lx) || !(y >= 0.0 && y < grid.ly) {
        return Err(ModelError::Domain(format!(
            "coordinate ({x}, {y}) outside domain [0,{}) x [0,{})",
            grid.lx, grid.ly
        )));
    }
    if layer >= grid.nz {
        return Err(ModelError::Domain(format!("layer {layer} outside {} layers", grid.nz)));
    }
    let i = ((x / grid.dx()).floor() as usize).min(grid.nx - 1);
    let j = ((y / grid.dy()).floor() as usize).min(grid.ny - 1);
    Ok((i, j, layer))
}

/// Mass-loading rate field at time `t` (g/(m³·d)): zero everywhere except the
/// source cell, which carries `q_s * S_s[p]` while the release is active.
pub fn build_source_field(src: &SourceConfig, t: f64, grid: &Grid3) -> Result<ScalarField> {
    src.validate(grid)?;
    if t < 0.0 {
        return Err(ModelError::Domain(format!("time must be >= 0, got {t}")));
    }
    let mut field = ScalarField::zeros(*grid);
    if src.n_re() == 0 {
        return Ok(field);
    }
    let rel = t - src.t0;
    if rel < 0.0 || rel >= src.duration() {
        return Ok(field);
    }
    let p = ((rel / src.period_len).floor() as usize).min(src.n_re() - 1);
    let (i, j, k) = locate_cell(src.sl_x, src.sl_y, src.layer, grid)?;
    field.set(i, j, k, src.q_s * src.strengths[p]);
    Ok(field)
}
