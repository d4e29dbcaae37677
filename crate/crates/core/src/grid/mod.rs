//! Deterministic 4-connected grid simulator with partial observation.

mod env;
mod generate;
pub mod io;
mod map;

pub use env::{
    observe, Action, AgentEvent, EnvConfig, GoalContext, GridEnv, Instance, Observation, StepOutcome, CHANNELS,
    COLLISION_COST, DEFAULT_FOV, DEFAULT_T_MAX, GOAL_REWARD, MOVE_COST, ON_GOAL_COST,
};
pub use generate::{generate_instance, place_formation, sample_formation, InstanceParams};
pub use map::{distance_field, generate_map, Cell, DistanceField, GridMap};
