use crate::error::{ModelError, Result};
use crate::grid::Grid3;

/// A per-cell scalar field on a [`Grid3`] (K in m/d, h in m, c in g/m³, lnK
/// dimensionless -- the role is the caller's).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid3,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(ModelError::Layout(format!(
                "field length {} does not match grid with {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(ModelError::Numeric(format!("non-finite field value {v}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid3) -> Self {
        Self { grid, values: vec![0.0; grid.n_cells()] }
    }

    pub fn constant(grid: Grid3, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.n_cells()])
    }

    #[inline]
    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.grid.idx(i, j, k);
        self.values[idx] = v;
    }

    /// Elementwise map into a new field on the same grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks that `other` lives on the same grid.
    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid() {
            return Err(ModelError::Layout("fields live on different grids".into()));
        }
        Ok(())
    }
}
