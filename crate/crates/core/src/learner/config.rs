//! Training configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::approximator::NeighborScope;
use crate::error::{Error, Result};
use crate::formation::Preference;
use crate::grid::InstanceParams;

/// Fields missing from a config file take their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub seed: u64,
    pub episodes: u64,
    pub gamma: f64,
    /// Soft target update rate.
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Preferences sampled per update.
    pub preference_samples: usize,
    pub t_max: usize,
    /// Preferences are drawn uniformly from `{0, 1/steps, ..., (steps-1)/steps}`.
    pub omega_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Fraction of the planned updates over which the homotopy weight ramps
    /// from 0 to `zeta_end`.
    pub zeta_ramp: f64,
    pub zeta_end: f64,
    pub buffer_capacity: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub updates_per_episode: usize,
    pub hidden: Vec<usize>,
    pub fov: usize,
    pub neighbors: NeighborScope,
    /// One `omega'` for all agents inside the envelope maximum.
    pub shared_omega: bool,
    /// Choose the envelope maximizer with the online network.
    pub select_with_online: bool,
    /// Episodes between greedy evaluations that decide curriculum advances.
    pub eval_interval: u64,
    /// Greedy rollouts per evaluation, on fresh instances of the current stage.
    pub eval_episodes: usize,
    pub advance_threshold: f64,
    pub curriculum: Vec<InstanceParams>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let stage = |size: usize, agents: usize| InstanceParams {
            width: size,
            height: size,
            density: 0.1,
            corner: 3,
            agents,
            formation_size: 3,
        };
        Self {
            seed: 0,
            episodes: 10_000,
            gamma: 0.95,
            alpha: 0.01,
            learning_rate: 5e-4,
            batch_size: 32,
            preference_samples: 8,
            t_max: 64,
            omega_steps: 100,
            beta_start: 0.5,
            beta_end: 8.0,
            zeta_ramp: 0.8,
            zeta_end: 1.0,
            buffer_capacity: 50_000,
            warmup: 1_000,
            updates_per_episode: 1,
            hidden: vec![64, 64],
            fov: 9,
            neighbors: NeighborScope::All,
            shared_omega: true,
            select_with_online: true,
            eval_interval: 200,
            eval_episodes: 50,
            advance_threshold: 0.9,
            curriculum: vec![stage(8, 2), stage(12, 2), stage(12, 3), stage(16, 3), stage(16, 4)],
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha {} outside (0, 1]", self.alpha));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive".into());
        }
        if self.batch_size == 0 || self.preference_samples == 0 || self.omega_steps == 0 {
            return bad("batch size, preference samples and omega steps must be positive".into());
        }
        if self.t_max == 0 || self.buffer_capacity == 0 {
            return bad("t_max and buffer capacity must be positive".into());
        }
        if !(self.beta_start >= 0.0 && self.beta_end >= 0.0 && self.beta_start.is_finite() && self.beta_end.is_finite()) {
            return bad("beta schedule must be finite and >= 0".into());
        }
        if !(self.zeta_ramp > 0.0 && self.zeta_ramp <= 1.0) {
            return bad(format!("zeta ramp {} outside (0, 1]", self.zeta_ramp));
        }
        if !(0.0..=1.0).contains(&self.zeta_end) {
            return bad(format!("zeta end {} outside [0, 1]", self.zeta_end));
        }
        if self.fov.is_multiple_of(2) || self.hidden.contains(&0) {
            return bad("fov must be odd and hidden widths positive".into());
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 || !(0.0..=1.0).contains(&self.advance_threshold) {
            return bad("evaluation interval and size must be positive, threshold in [0, 1]".into());
        }
        if self.curriculum.is_empty() {
            return bad("curriculum needs at least one stage".into());
        }
        for (stage, p) in self.curriculum.iter().enumerate() {
            p.validate().map_err(|e| Error::Curriculum {
                stage,
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Linear from `beta_start` at the first episode to `beta_end` at the last.
    pub fn beta(&self, episode: u64) -> f64 {
        let f = if self.episodes <= 1 {
            1.0
        } else {
            (episode as f64 / (self.episodes - 1) as f64).min(1.0)
        };
        self.beta_start + (self.beta_end - self.beta_start) * f
    }

    pub fn planned_updates(&self) -> u64 {
        self.episodes * self.updates_per_episode as u64
    }

    /// Homotopy weight after `updates` gradient steps.
    pub fn zeta(&self, updates: u64) -> f64 {
        let ramp = self.zeta_ramp * self.planned_updates() as f64;
        if ramp <= 0.0 {
            return self.zeta_end;
        }
        self.zeta_end * (updates as f64 / ramp).min(1.0)
    }

    pub fn preference_grid(&self) -> Vec<Preference> {
        (0..self.omega_steps)
            .map(|k| Preference::new(k as f64 / self.omega_steps as f64).expect("grid below 1"))
            .collect()
    }
}
