//! Budgeted testing of black-box systems against signal temporal logic
//! specifications.
//!
//! The pipeline: a [`design::Domain`] describes the environment parameters,
//! a [`blackbox`] maps a parameter point to a trace, [`robustness`] scores
//! the trace against an [`stl::Formula`], and [`acquisition`] chooses which
//! points to run so that a [`gp::Surrogate`] of the robustness landscape is
//! as accurate as possible for a fixed number of runs.

pub mod acquisition;
pub mod bench;
pub mod blackbox;
pub mod design;
pub mod gp;
pub mod robustness;
mod seed;
pub mod stl;
