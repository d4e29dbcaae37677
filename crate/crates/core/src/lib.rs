//! Moving agents in formation: a grid simulator with partial observation,
//! centralized bi-objective planners, and mean-field envelope Q-learning.

pub mod approximator;
pub mod error;
pub mod formation;
pub mod grid;
pub mod harness;
pub mod learner;
pub mod planners;

pub use error::{Error, Result};
