//! Riemannian exponential and logarithm in chart coordinates, estimates of
//! the constants that control them, and inverse function certificates.

pub mod constants;
mod exp;
mod log;
mod metric;
pub mod qift;

pub use constants::{estimate_constants, ConstantsOptions, ConstantsReport, ConstantsRequest, RegionKind};
pub use exp::{ExpEvaluation, ExpOptions};
pub use log::{LogEvaluation, LOG_MAX_ITER, LOG_TOL};
pub use metric::MetricField;
