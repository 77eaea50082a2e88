//! Prioritized distributed trajectory planning for networked vehicles with
//! motion-primitive automata, reachable-set coupling and level-limited
//! sequential planning.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coupling;
pub mod error;
pub mod geometry;
pub mod mpa;
pub mod partition;
pub mod planner;
pub mod sim;
pub mod vehicle;

pub use error::{Error, Result};
