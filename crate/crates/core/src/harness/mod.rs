//! Experiment orchestration behind the `maif` command line.

mod commands;
mod experiment;
mod results;

pub use commands::{
    check_instance, cmd_eval, cmd_generate, cmd_plan, cmd_report, cmd_train, cmd_validate, plan_instance, Planned,
    Validated,
};
pub use experiment::{ExperimentSpec, Method, ScheduledFormation};
pub use results::{
    aggregate, read_rows, write_csv, write_rows, ParetoPoint, Report, ResultRow, SummaryRow, MIX_LAMBDAS,
    RESULTS_SCHEMA,
};
