use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Structured, cell-centered 3D grid with uniform spacing per axis.
///
/// Axis order is (x, y, z); z index 0 is the top layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Domain extent along x (m).
    pub lx: f64,
    /// Domain extent along y (m).
    pub ly: f64,
    /// Domain extent along z (m).
    pub lz: f64,
}

impl Grid3 {
    pub fn new(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, lz: f64) -> Result<Self> {
        if nx < 2 || ny < 2 || nz < 2 {
            return Err(ModelError::Domain(format!(
                "cell counts must be >= 2, got {nx}x{ny}x{nz}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lz > 0.0) {
            return Err(ModelError::Domain(format!(
                "extents must be positive, got {lx}x{ly}x{lz}"
            )));
        }
        Ok(Self { nx, ny, nz, lx, ly, lz })
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    #[inline]
    pub fn dz(&self) -> f64 {
        self.lz / self.nz as f64
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Cell volume (m³).
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.dx() * self.dy() * self.dz()
    }

    /// Linear index of cell (i, j, k); x varies fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k < self.nz);
        i + self.nx * (j + self.ny * k)
    }

    /// Cell-center coordinate of cell (i, j, k).
    #[inline]
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            (i as f64 + 0.5) * self.dx(),
            (j as f64 + 0.5) * self.dy(),
            (k as f64 + 0.5) * self.dz(),
        ]
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }
}
