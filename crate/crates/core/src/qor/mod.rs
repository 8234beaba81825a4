//! Latency and resource estimation.

pub mod estimate;
pub mod schedule;
pub mod target;

pub use estimate::{count_ops, dsp_efficiency, estimate, EstimateError, FuncReport, QoRReport};
pub use target::{OpClass, OpCost, TargetSpec};
