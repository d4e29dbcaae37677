//! The training loop: Boltzmann rollouts into a replay buffer, envelope
//! targets from the target network, homotopy-loss Adam updates, soft target
//! tracking and a curriculum driven by greedy evaluation.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainingConfig;
use super::envelope::{envelope_targets, loss, TargetOptions};
use super::execute::{execute_policy, executed_paths, ExecOptions, Selection};
use super::features::input_layout;
use super::policy::{boltzmann_policy, mean_actions, q_values, sample_action, MeanAction};
use super::replay::{ReplayBuffer, Transition};
use crate::approximator::{optimizer_step, soft_update, Checkpoint, NetworkSpec, OptimizerState, ParamStore};
use crate::error::{Error, Result};
use crate::formation::{evaluate_solution, mix, Preference};
use crate::grid::{generate_instance, EnvConfig, GridEnv, Instance, InstanceParams};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub episode: u64,
    pub stage: usize,
    pub success: bool,
    pub makespan: u64,
    pub form_dev_avg: f64,
    #[serde(rename = "mix@0.5")]
    pub mix_half: f64,
    /// Mean loss of the episode's updates, empty before the first update.
    pub loss: Option<f64>,
    pub zeta: f64,
    pub beta: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
}

pub fn write_log<W: Write>(rows: &[LogRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record([
            "episode", "stage", "success", "makespan", "form_dev_avg", "mix@0.5", "loss", "zeta", "beta", "wall_ms",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Freshly initialized network, optimizer and RNG for `config`.
pub fn initial_checkpoint(config: &TrainingConfig) -> Result<Checkpoint> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let spec = NetworkSpec::mlp(input_layout(config.fov, config.neighbors), &config.hidden)?;
    let theta = spec.init_params(&mut rng);
    let opt = OptimizerState::new(theta.len(), config.learning_rate);
    Ok(Checkpoint::new(spec, ParamStore::new(theta), opt, rng))
}

/// Trains on instances drawn by the default generator.
pub fn train(config: &TrainingConfig) -> Result<TrainingOutcome> {
    train_with(config, |_, params, rng| generate_instance(params, rng.gen(), rng.gen()), |_| {})
}

/// Trains with a custom instance source. `factory` receives the curriculum
/// stage, its parameters and the training RNG; `on_episode` sees each log
/// row as it is produced.
pub fn train_with<F, L>(config: &TrainingConfig, mut factory: F, mut on_episode: L) -> Result<TrainingOutcome>
where
    F: FnMut(usize, &InstanceParams, &mut ChaCha8Rng) -> Result<Instance>,
    L: FnMut(&LogRow),
{
    let mut ck = initial_checkpoint(config)?;
    let mut rng = ck.rng.clone();
    let grid = config.preference_grid();
    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    let mut log = Vec::with_capacity(config.episodes as usize);
    let fov = config.fov;
    let target_options = TargetOptions {
        gamma: config.gamma,
        shared_omega: config.shared_omega,
    };

    for episode in 0..config.episodes {
        let started = Instant::now();
        let stage = ck.progress.stage;
        let params = &config.curriculum[stage];
        let instance = factory(stage, params, &mut rng).map_err(|e| Error::Curriculum {
            stage,
            reason: e.to_string(),
        })?;
        let preference = grid[rng.gen_range(0..grid.len())];
        let beta = config.beta(episode);

        let mut env = GridEnv::new(&instance, EnvConfig { fov, t_max: config.t_max })?;
        let mut means = vec![MeanAction::uniform(); instance.agents()];
        while !env.is_terminal() {
            let mut actions = Vec::with_capacity(instance.agents());
            for (j, mean) in means.iter().enumerate() {
                let q = q_values(&env.observe(j), mean, preference, &ck.spec, &ck.params.theta)?;
                actions.push(sample_action(&boltzmann_policy(&q, preference, beta)?, &mut rng));
            }
            let positions = env.positions().to_vec();
            let outcome = env.step(&actions)?;
            let next_means = mean_actions(&actions, &positions, config.neighbors, fov);
            buffer.push(Transition {
                map: env.map().clone(),
                goals: env.goal_context().clone(),
                positions,
                actions,
                rewards: outcome.rewards,
                next_positions: env.positions().to_vec(),
                mean_actions: std::mem::replace(&mut means, next_means.clone()),
                next_mean_actions: next_means,
                terminal: env.all_on_goal(),
            });
        }
        let success = env.all_on_goal();
        let value = evaluate_solution(&executed_paths(env.history(), success), env.goals())?;

        let mut losses = Vec::new();
        if buffer.len() >= config.warmup.max(1) {
            for _ in 0..config.updates_per_episode {
                losses.push(update(config, &mut ck, &buffer, &grid, &mut rng, target_options)?);
            }
        }
        ck.progress.episodes += 1;

        if stage + 1 < config.curriculum.len() && (episode + 1).is_multiple_of(config.eval_interval) {
            let rate = greedy_success(config, &ck, stage, &grid, &mut factory, &mut rng)?;
            log::debug!("episode {episode}: greedy success {rate:.3} on stage {stage}");
            if rate > config.advance_threshold {
                log::info!("episode {episode}: greedy success {rate:.3}, advancing to stage {}", stage + 1);
                ck.progress.stage += 1;
            }
        }

        let row = LogRow {
            episode,
            stage,
            success,
            makespan: value.makespan,
            form_dev_avg: value.form_dev_avg(),
            mix_half: mix(&value, Preference::new(0.5).expect("valid")),
            loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            zeta: ck.progress.zeta,
            beta,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        on_episode(&row);
        log.push(row);
    }
    ck.rng = rng;
    Ok(TrainingOutcome { checkpoint: ck, log })
}

/// Greedy success rate of the current parameters on fresh instances of `stage`.
fn greedy_success<F>(
    config: &TrainingConfig,
    ck: &Checkpoint,
    stage: usize,
    grid: &[Preference],
    factory: &mut F,
    rng: &mut ChaCha8Rng,
) -> Result<f64>
where
    F: FnMut(usize, &InstanceParams, &mut ChaCha8Rng) -> Result<Instance>,
{
    let options = ExecOptions {
        t_max: config.t_max,
        time_limit: None,
    };
    let mut wins = 0;
    for _ in 0..config.eval_episodes {
        let instance = factory(stage, &config.curriculum[stage], rng).map_err(|e| Error::Curriculum {
            stage,
            reason: e.to_string(),
        })?;
        let preference = grid[rng.gen_range(0..grid.len())];
        wins += execute_policy(ck, &instance, preference, Selection::Greedy, &[], options)?.success as usize;
    }
    Ok(wins as f64 / config.eval_episodes as f64)
}

fn update(
    config: &TrainingConfig,
    ck: &mut Checkpoint,
    buffer: &ReplayBuffer,
    grid: &[Preference],
    rng: &mut ChaCha8Rng,
    options: TargetOptions,
) -> Result<f64> {
    let batch = buffer.sample(config.batch_size, rng);
    let prefs: Vec<Preference> = (0..config.preference_samples)
        .map(|_| grid[rng.gen_range(0..grid.len())])
        .collect();
    let select = config.select_with_online.then_some(ck.params.theta.as_slice());
    let targets = envelope_targets(&batch, &prefs, &ck.spec, &ck.params.target, select, options)?;
    let (value, grad) = loss(&batch, &targets, &ck.spec, &ck.params.theta, &prefs, ck.progress.zeta)?;
    optimizer_step(&mut ck.params.theta, &grad, &mut ck.optimizer)?;
    soft_update(&ck.params.theta, &mut ck.params.target, config.alpha)?;
    ck.progress.updates += 1;
    ck.progress.zeta = config.zeta(ck.progress.updates);
    Ok(value.total)
}
