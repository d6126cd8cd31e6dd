//! Steady-state flow: 7-point finite-volume discretization of
//! `div(K grad h) = 0` with harmonic-mean face transmissibilities, Dirichlet
//! heads on the x facets (imposed through ghost-face transmissibilities at
//! half-cell distance) and zero flux elsewhere.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::field::ScalarField;
use crate::grid::Grid3;
use crate::sparse::{pcg, Csr};
use crate::transport::SolverOptions;

/// Constant-head boundary values on the x = 0 and x = lx facets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowBcs {
    pub h_left: f64,
    pub h_right: f64,
}

impl FlowBcs {
    pub fn validate(&self) -> Result<()> {
        if !self.h_left.is_finite() || !self.h_right.is_finite() {
            return Err(ModelError::Domain("boundary heads must be finite".into()));
        }
        Ok(())
    }
}

/// Face-normal Darcy fluxes (m/d, positive along the axis) on all faces plus
/// cell-centered pore velocities (m/d).
#[derive(Debug, Clone)]
pub struct VelocityField {
    grid: Grid3,
    /// x-face flux, index `i + (nx+1)*(j + ny*k)`, i in 0..=nx.
    pub qx: Vec<f64>,
    /// y-face flux, index `i + nx*(j + (ny+1)*k)`, j in 0..=ny.
    pub qy: Vec<f64>,
    /// z-face flux, index `i + nx*(j + ny*k)`, k in 0..=nz.
    pub qz: Vec<f64>,
    /// Cell-centered pore velocity u = q/theta, face-averaged.
    pub u_cell: Vec<[f64; 3]>,
}

impl VelocityField {
    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    #[inline]
    pub fn fx(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.grid.nx + 1) * (j + self.grid.ny * k)
    }

    #[inline]
    pub fn fy(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.grid.nx * (j + (self.grid.ny + 1) * k)
    }

    #[inline]
    pub fn fz(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.grid.nx * (j + self.grid.ny * k)
    }

    /// Net volumetric outflow of a cell (m³/d); ~0 for divergence-free flow.
    pub fn cell_net_outflow(&self, i: usize, j: usize, k: usize) -> f64 {
        let g = &self.grid;
        let ax = g.dy() * g.dz();
        let ay = g.dx() * g.dz();
        let az = g.dx() * g.dy();
        ax * (self.qx[self.fx(i + 1, j, k)] - self.qx[self.fx(i, j, k)])
            + ay * (self.qy[self.fy(i, j + 1, k)] - self.qy[self.fy(i, j, k)])
            + az * (self.qz[self.fz(i, j, k + 1)] - self.qz[self.fz(i, j, k)])
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Assembles the flow system `A h = b`. Exposed so tests can compare the
/// iterative solution against a dense direct solve of the same system.
pub fn assemble_flow_system(k: &ScalarField, bcs: &FlowBcs) -> Result<(Csr, Vec<f64>)> {
    let grid = k.grid();
    if k.values().iter().any(|&v| v <= 0.0) {
        return Err(ModelError::Domain("conductivity must be positive everywhere".into()));
    }
    bcs.validate()?;

    let (dx, dy, dz) = (grid.dx(), grid.dy(), grid.dz());
    let ax = dy * dz;
    let ay = dx * dz;
    let az = dx * dy;
    let n = grid.n_cells();
    let kv = k.values();

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(7); n];
    let mut rhs = vec![0.0; n];

    for kk in 0..grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let p = grid.idx(i, j, kk);
                let mut diag = 0.0;

                let couple = |rows: &mut Vec<Vec<(usize, f64)>>, q: usize, t: f64| {
                    rows[p].push((q, -t));
                    t
                };

                if i + 1 < grid.nx {
                    let q = grid.idx(i + 1, j, kk);
                    diag += couple(&mut rows, q, harmonic(kv[p], kv[q]) * ax / dx);
                }
                if i > 0 {
                    let q = grid.idx(i - 1, j, kk);
                    diag += couple(&mut rows, q, harmonic(kv[p], kv[q]) * ax / dx);
                }
                if j + 1 < grid.ny {
                    let q = grid.idx(i, j + 1, kk);
                    diag += couple(&mut rows, q, harmonic(kv[p], kv[q]) * ay / dy);
                }
                if j > 0 {
                    let q = grid.idx(i, j - 1, kk);
                    diag += couple(&mut rows, q, harmonic(kv[p], kv[q]) * ay / dy);
                }
                if kk + 1 < grid.nz {
                    let q = grid.idx(i, j, kk + 1);
                    diag += couple(&mut rows, q, harmonic(kv[p], kv[q]) * az / dz);
                }
                if kk > 0 {
                    let q = grid.idx(i, j, kk - 1);
                    diag += couple(&mut rows, q, harmonic(kv[p], kv[q]) * az / dz);
                }

                // Dirichlet ghost faces at half-cell distance.
                if i == 0 {
                    let t = kv[p] * ax / (dx / 2.0);
                    diag += t;
                    rhs[p] += t * bcs.h_left;
                }
                if i + 1 == grid.nx {
                    let t = kv[p] * ax / (dx / 2.0);
                    diag += t;
                    rhs[p] += t * bcs.h_right;
                }

                rows[p].push((p, diag));
            }
        }
    }
    Ok((Csr::from_rows(rows), rhs))
}

/// Solves the steady flow equation for the head field.
pub fn solve_flow(k: &ScalarField, bcs: &FlowBcs, opts: &SolverOptions) -> Result<ScalarField> {
    opts.validate()?;
    let (a, b) = assemble_flow_system(k, bcs)?;
    let max_iter = opts.max_iter_factor * a.n;
    let (h, _iters) = pcg(&a, &b, None, opts.rel_tol, max_iter)?;
    ScalarField::new(k.grid(), h)
}

/// Face Darcy fluxes `q = -K grad h` and cell-centered pore velocities
/// `u = q / theta`. The Dirichlet heads enter through the x-facet ghost
/// faces; y and z boundary faces carry zero flux.
pub fn darcy_velocity(k: &ScalarField, h: &ScalarField, theta: f64, bcs: &FlowBcs) -> Result<VelocityField> {
    k.same_grid(h)?;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(ModelError::Domain(format!("porosity must be in (0,1), got {theta}")));
    }
    let grid = k.grid();
    let (dx, dy, dz) = (grid.dx(), grid.dy(), grid.dz());
    let kv = k.values();
    let hv = h.values();

    let mut vel = VelocityField {
        grid,
        qx: vec![0.0; (grid.nx + 1) * grid.ny * grid.nz],
        qy: vec![0.0; grid.nx * (grid.ny + 1) * grid.nz],
        qz: vec![0.0; grid.nx * grid.ny * (grid.nz + 1)],
        u_cell: vec![[0.0; 3]; grid.n_cells()],
    };

    for kk in 0..grid.nz {
        for j in 0..grid.ny {
            // Interior and Dirichlet x faces.
            for i in 0..=grid.nx {
                let f = vel.fx(i, j, kk);
                vel.qx[f] = if i == 0 {
                    let p = grid.idx(0, j, kk);
                    -kv[p] * (hv[p] - bcs.h_left) / (dx / 2.0)
                } else if i == grid.nx {
                    let p = grid.idx(grid.nx - 1, j, kk);
                    -kv[p] * (bcs.h_right - hv[p]) / (dx / 2.0)
                } else {
                    let l = grid.idx(i - 1, j, kk);
                    let r = grid.idx(i, j, kk);
                    -harmonic(kv[l], kv[r]) * (hv[r] - hv[l]) / dx
                };
            }
            // Interior y faces (boundary faces stay zero).
            for i in 0..grid.nx {
                for jj in 1..grid.ny {
                    let l = grid.idx(i, jj - 1, kk);
                    let r = grid.idx(i, jj, kk);
                    let f = vel.fy(i, jj, kk);
                    vel.qy[f] = -harmonic(kv[l], kv[r]) * (hv[r] - hv[l]) / dy;
                }
            }
        }
    }
    for kk in 1..grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let l = grid.idx(i, j, kk - 1);
                let r = grid.idx(i, j, kk);
                let f = vel.fz(i, j, kk);
                vel.qz[f] = -harmonic(kv[l], kv[r]) * (hv[r] - hv[l]) / dz;
            }
        }
    }

    for kk in 0..grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let p = grid.idx(i, j, kk);
                let ux = 0.5 * (vel.qx[vel.fx(i, j, kk)] + vel.qx[vel.fx(i + 1, j, kk)]);
                let uy = 0.5 * (vel.qy[vel.fy(i, j, kk)] + vel.qy[vel.fy(i, j + 1, kk)]);
                let uz = 0.5 * (vel.qz[vel.fz(i, j, kk)] + vel.qz[vel.fz(i, j, kk + 1)]);
                vel.u_cell[p] = [ux / theta, uy / theta, uz / theta];
            }
        }
    }
    Ok(vel)
}
