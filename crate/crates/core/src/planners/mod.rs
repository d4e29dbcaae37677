//! Centralized baselines: scalarized prioritized planning and joint-state
//! focal search, plus an independent solution checker.

mod jsa;
mod reservation;
mod solution;
mod spp;
mod validate;

pub use jsa::{dense_epsilons, jsa_frontier, jsa_pareto, MAX_AGENTS};
pub use reservation::Reservation;
pub use solution::{split_joint_path, trim_trailing_waits, Solution};
pub use spp::{default_horizon, spp_plan};
pub use validate::{validate_solution, ValidationReport, Violation};
