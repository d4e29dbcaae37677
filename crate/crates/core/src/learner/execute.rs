//! Running a trained policy on an instance.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::input_layout;
use super::policy::{boltzmann_policy, greedy_action, mean_actions, q_values, sample_action, MeanAction};
use crate::approximator::Checkpoint;
use crate::error::{Error, Result};
use crate::formation::{evaluate_with_schedule, Preference};
use crate::grid::io::FormationChange;
use crate::grid::{Action, Cell, EnvConfig, GridEnv, Instance, DEFAULT_T_MAX};
use crate::planners::{split_joint_path, Solution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// Argmax of the scalarized Q-values.
    Greedy,
    /// Sample from the Boltzmann policy.
    Boltzmann { beta: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecOptions {
    pub t_max: usize,
    /// Wall-clock budget; exceeding it ends the episode unsuccessfully.
    pub time_limit: Option<Duration>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            t_max: DEFAULT_T_MAX,
            time_limit: None,
        }
    }
}

/// State at time `t`, the formation in force and the actions then taken
/// (empty on the last entry).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub t: usize,
    pub positions: Vec<Cell>,
    pub goals: Vec<Cell>,
    pub deviation: u64,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub solution: Solution,
    pub success: bool,
    pub timed_out: bool,
    pub trace: Vec<TraceStep>,
}

/// Per-agent paths of an episode. Successful runs drop each agent's trailing
/// waits on its goal; failed runs keep the full length.
pub fn executed_paths(history: &[Vec<Cell>], success: bool) -> Vec<Vec<Cell>> {
    if success {
        return split_joint_path(history);
    }
    let agents = history.first().map_or(0, |s| s.len());
    (0..agents).map(|i| history.iter().map(|s| s[i]).collect()).collect()
}

fn check_schedule(instance: &Instance, schedule: &[FormationChange]) -> Result<()> {
    if schedule.windows(2).any(|w| w[0].t >= w[1].t) {
        return Err(Error::invalid("formation schedule must be strictly increasing in time"));
    }
    if schedule.iter().any(|c| c.goals.len() != instance.agents()) {
        return Err(Error::invalid("scheduled formation has a different agent count"));
    }
    Ok(())
}

fn run_episode<F>(
    instance: &Instance,
    schedule: &[FormationChange],
    options: ExecOptions,
    fov: usize,
    mut choose: F,
) -> Result<Execution>
where
    F: FnMut(&GridEnv) -> Result<Vec<Action>>,
{
    check_schedule(instance, schedule)?;
    let started = Instant::now();
    let mut env = GridEnv::new(
        instance,
        EnvConfig {
            fov,
            t_max: options.t_max,
        },
    )?;
    let mut trace = Vec::new();
    let mut timed_out = false;
    loop {
        let t = env.time();
        if let Some(change) = schedule.iter().find(|c| c.t as usize == t) {
            env.set_desired_formation(change.goals.clone())?;
        }
        let mut step = TraceStep {
            t,
            positions: env.positions().to_vec(),
            goals: env.goals().to_vec(),
            deviation: env.current_deviation().total,
            actions: Vec::new(),
        };
        if env.is_terminal() {
            trace.push(step);
            break;
        }
        if options.time_limit.is_some_and(|limit| started.elapsed() > limit) {
            timed_out = true;
            trace.push(step);
            break;
        }
        let actions = choose(&env)?;
        env.step(&actions)?;
        step.actions = actions;
        trace.push(step);
    }
    let success = env.all_on_goal() && !timed_out;
    let paths = executed_paths(env.history(), success);
    let pairs: Vec<(u64, Vec<Cell>)> = schedule.iter().map(|c| (c.t, c.goals.clone())).collect();
    let value = evaluate_with_schedule(&paths, &instance.goals, &pairs)?;
    Ok(Execution {
        solution: Solution { paths, value },
        success,
        timed_out,
        trace,
    })
}

/// Runs the checkpoint's policy for every agent until all agents sit on
/// their goals, the step cap is hit, or the time budget runs out. Scheduled
/// formation changes take effect at the start of their time step.
pub fn execute_policy(
    checkpoint: &Checkpoint,
    instance: &Instance,
    preference: Preference,
    selection: Selection,
    schedule: &[FormationChange],
    options: ExecOptions,
) -> Result<Execution> {
    let spec = &checkpoint.spec;
    let layout = spec.layout;
    if layout != input_layout(layout.fov, layout.neighbors) || spec.validate().is_err() {
        return Err(Error::invalid("checkpoint network does not take this simulator's observations"));
    }
    if checkpoint.params.theta.len() != spec.param_count() {
        return Err(Error::invalid("checkpoint parameters do not match its network"));
    }
    let theta = &checkpoint.params.theta;
    let mut rng = match selection {
        Selection::Boltzmann { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Selection::Greedy => None,
    };
    let scope = layout.neighbors;
    let fov = layout.fov;
    let mut means = vec![MeanAction::uniform(); instance.agents()];
    run_episode(instance, schedule, options, fov, |env| {
        let mut actions = Vec::with_capacity(env.agents());
        for (j, mean) in means.iter().enumerate() {
            let q = q_values(&env.observe(j), mean, preference, spec, theta)?;
            let a = match (selection, rng.as_mut()) {
                (Selection::Boltzmann { beta, .. }, Some(r)) => sample_action(&boltzmann_policy(&q, preference, beta)?, r),
                _ => greedy_action(&q, preference),
            };
            actions.push(a);
        }
        means = mean_actions(&actions, env.positions(), scope, fov);
        Ok(actions)
    })
}

/// Baseline that draws every action uniformly at random.
pub fn execute_random(
    instance: &Instance,
    seed: u64,
    schedule: &[FormationChange],
    options: ExecOptions,
) -> Result<Execution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_episode(instance, schedule, options, 1, |env| {
        Ok((0..env.agents()).map(|_| Action::ALL[rng.gen_range(0..5)]).collect())
    })
}
