//! Mean-field envelope Q-learning for the formation task.

mod config;
mod envelope;
mod execute;
mod features;
mod policy;
mod replay;
mod train;

pub use config::TrainingConfig;
pub use envelope::{
    envelope_backup, envelope_target, envelope_targets, homotopy_loss, loss, q_for_preferences, LossValue,
    TargetOptions,
};
pub use execute::{execute_policy, execute_random, executed_paths, ExecOptions, Execution, Selection, TraceStep};
pub use features::{assemble_input, input_layout, relative_summary, state_features, PREFERENCE_INPUTS, RELATIVE_FEATURES};
pub use policy::{
    boltzmann_policy, greedy_action, mean_action, mean_actions, q_values, sample_action, softmax, MeanAction, QMatrix,
};
pub use replay::{ReplayBuffer, SharedReplay, Transition};
pub use train::{initial_checkpoint, train, train_with, write_log, LogRow, TrainingOutcome};
