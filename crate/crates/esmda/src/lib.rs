//! Ensemble smoother with multiple data assimilation.
//!
//! Prior sampling over the `[z | sl | ss]` parameter layout, anomaly
//! covariances, a TSVD-regularized Kalman-type update with inflated
//! observation noise, and the multi-iteration driver [`run_esmda`].

mod driver;
mod error;
mod prior;
mod schedule;
mod tsvd;
mod update;

pub use driver::{derive_seed, run_esmda, EsmdaOptions, RunResult, UpdateReport};
pub use error::{EsmdaError, Result};
pub use prior::PriorSpec;
pub use schedule::InflationSchedule;
pub use tsvd::tsvd_pinv;
pub use update::{ensemble_covariances, esmda_update};
