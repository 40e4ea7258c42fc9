//! Per-layer primitive selection for convolutional networks under joint
//! execution-time and memory constraints.
//!
//! A [`model::NetworkProfile`] lists, for each layer, the candidate
//! implementations with their profiled time and footprint, plus the cost of
//! converting data layouts between neighbouring layers. The [`ilp`] module
//! turns a profile into an exact 0-1 integer program and solves it;
//! [`strategies`] wraps the solve modes and the greedy and uniform baselines;
//! [`pareto`] sweeps memory budgets to trace the time/memory frontier.

pub mod cost;
pub mod ilp;
pub mod io;
pub mod model;
pub mod pareto;
pub mod strategies;
pub mod synth;
pub mod units;
pub mod workspace;

pub use model::{Network, NetworkProfile, ObjectiveBreakdown, Selection};
