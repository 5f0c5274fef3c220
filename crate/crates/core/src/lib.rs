//! Cascading-failure simulator and price-modification attack planner for
//! power grids with attached microgrids.

// `!(x > 0)` checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Dense kernels index several arrays with one counter.
#![allow(clippy::needless_range_loop)]

pub mod cascade;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod linalg;
pub mod model;
pub mod planner;
pub mod powerflow;
pub mod pricing;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Grid = model::GridCase<f64>;
pub type Grid32 = model::GridCase<f32>;
pub type Composed = model::ComposedGrid<f64>;
pub type Flows = powerflow::FlowSolution<f64>;
pub type Sensitivities = powerflow::SensitivityMatrix<f64>;
pub type Outcome = cascade::CascadeOutcome<f64>;
pub type Tariff = pricing::Tariff<f64>;
pub type Plan = planner::PlanResult<f64>;
