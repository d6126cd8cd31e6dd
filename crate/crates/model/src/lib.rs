//! Groundwater flow and reactive transport on a structured 3D grid.
//!
//! The crate owns the domain geometry ([`Grid3`], [`ScalarField`]), the
//! physical parameters ([`TransportParams`], [`SourceConfig`]), the packing of
//! inversion unknowns ([`ParamLayout`]), a finite-volume forward model
//! ([`solve_flow`], [`transport_step`], [`simulate`]) and the sensor
//! observation operators ([`observe`], [`add_noise`], [`perturb_observations`]).
//!
//! Conventions used throughout:
//! - axis order is (x, y, z); the z index 0 is the top layer;
//! - cells are indexed `(i, j, k)` with linear index `i + nx*(j + ny*k)`;
//! - heads are in m, conductivities in m/d, concentrations in g/m³,
//!   times in days.

mod error;
mod field;
mod flow;
mod grid;
pub mod obs;
mod params;
mod sim;
pub mod sparse;
mod source;
mod step;
mod transport;

pub use error::{ModelError, Result};
pub use field::ScalarField;
pub use flow::{assemble_flow_system, darcy_velocity, solve_flow, FlowBcs, VelocityField};
pub use grid::Grid3;
pub use obs::{add_noise, observe, perturb_observations, NoiseCov, NoiseModel, ObservationSet, Provenance, WellNetwork};
pub use params::ParamLayout;
pub use sim::{simulate, SimOutput};
pub use source::{build_source_field, locate_cell, SourceConfig};
pub use step::{assemble_transport_system, transport_step};
pub use transport::{dispersion_coefficients, SolverOptions, TransportParams};
