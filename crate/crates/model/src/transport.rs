use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Physical transport parameters (Freundlich sorption, dispersivities).
///
/// `rho_b` is in g/m³. `unit_scale` multiplies the product `rho_b * k_f`
/// inside the retardation factor; it exists because the bulk-density and
/// Freundlich-constant unit conventions interact (g/m³ vs g/cm³), and both
/// readings are useful. `unit_scale = 1` takes the values literally,
/// `unit_scale = 1e-6` reads the bulk density in g/cm³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportParams {
    /// Porosity (-), in (0, 1).
    pub theta: f64,
    /// Bulk density (g/m³).
    pub rho_b: f64,
    /// Freundlich constant ((m³/g)^a).
    pub k_f: f64,
    /// Freundlich exponent (-), > 0.
    pub a: f64,
    /// Longitudinal dispersivity (m).
    pub alpha_l: f64,
    /// Transverse dispersivity, y direction (m).
    pub alpha_t: f64,
    /// Transverse dispersivity, z direction (m).
    pub alpha_c: f64,
    /// Molecular diffusion (m²/d).
    pub d_m: f64,
    /// Multiplier applied to `rho_b * k_f` in the retardation factor (-).
    pub unit_scale: f64,
}

impl TransportParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(ModelError::Domain(format!("porosity must be in (0,1), got {}", self.theta)));
        }
        if self.a <= 0.0 {
            return Err(ModelError::Domain(format!("Freundlich exponent must be > 0, got {}", self.a)));
        }
        if self.alpha_l < 0.0 || self.alpha_t < 0.0 || self.alpha_c < 0.0 {
            return Err(ModelError::Domain("dispersivities must be >= 0".into()));
        }
        if self.d_m < 0.0 {
            return Err(ModelError::Domain("molecular diffusion must be >= 0".into()));
        }
        if self.rho_b < 0.0 || self.k_f < 0.0 || self.unit_scale < 0.0 {
            return Err(ModelError::Domain("rho_b, k_f and unit_scale must be >= 0".into()));
        }
        Ok(())
    }

    /// Sorbed concentration per Freundlich: `c_tilde = K_f c^a` (scaled).
    #[inline]
    pub fn sorbed(&self, c: f64) -> f64 {
        self.unit_scale * self.k_f * c.max(0.0).powf(self.a)
    }

    /// Retardation factor `R = 1 + unit_scale (rho_b/theta) K_f a c^(a-1)`,
    /// with `c` floored at `c_floor` to keep R finite for a < 1.
    #[inline]
    pub fn retardation(&self, c: f64, c_floor: f64) -> f64 {
        let c = c.max(c_floor);
        1.0 + self.unit_scale * (self.rho_b / self.theta) * self.k_f * self.a * c.powf(self.a - 1.0)
    }

    /// Chord-slope retardation between two states, used by the implicit
    /// transport step so that dissolved + sorbed mass telescopes exactly:
    /// `R = 1 + (rho_b/theta) (c_tilde(c1) - c_tilde(c0)) / (c1 - c0)`.
    /// Falls back to the tangent form when the states coincide.
    #[inline]
    pub fn chord_retardation(&self, c0: f64, c1: f64, c_floor: f64) -> f64 {
        let dc = c1 - c0;
        let scale = 1.0 + c0.abs() + c1.abs();
        if dc.abs() <= 1e-12 * scale {
            return self.retardation(0.5 * (c0 + c1), c_floor);
        }
        let slope = (self.sorbed(c1) - self.sorbed(c0)) / dc * self.rho_b;
        1.0 + slope / self.theta
    }
}

/// Diagonal dispersion coefficients per cell from the local velocity
/// magnitude `s = |u|`: `D_ii = theta*D_m + alpha_i * s`.
#[inline]
pub fn dispersion_coefficients(u: [f64; 3], params: &TransportParams) -> [f64; 3] {
    let s = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let base = params.theta * params.d_m;
    [
        base + params.alpha_l * s,
        base + params.alpha_t * s,
        base + params.alpha_c * s,
    ]
}

/// Numerical controls for the flow and transport solves.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative residual tolerance of the linear solves.
    pub rel_tol: f64,
    /// Cap on linear-solver iterations as a multiple of the cell count.
    pub max_iter_factor: usize,
    /// Infinity-norm tolerance of the Picard loop on the new concentration.
    pub picard_tol: f64,
    /// Maximum Picard iterations per transport step.
    pub picard_max: usize,
    /// Transport substeps per stress period.
    pub substeps: usize,
    /// Concentration floor used when evaluating the retardation factor (g/m³).
    pub c_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter_factor: 10,
            picard_tol: 1e-8,
            picard_max: 20,
            substeps: 20,
            c_floor: 1e-8,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.picard_tol > 0.0 && self.c_floor > 0.0) {
            return Err(ModelError::Domain("solver tolerances must be positive".into()));
        }
        if self.substeps == 0 || self.picard_max == 0 || self.max_iter_factor == 0 {
            return Err(ModelError::Domain("solver iteration counts must be positive".into()));
        }
        Ok(())
    }
}
