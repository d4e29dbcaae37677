use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::io::FormationChange;
use crate::grid::{generate_instance, Cell, Instance, InstanceParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Spp,
    Jsa,
    Mfceq,
    Random,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Spp => "spp",
            Method::Jsa => "jsa",
            Method::Mfceq => "mfceq",
            Method::Random => "random",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spp" => Ok(Method::Spp),
            "jsa" => Ok(Method::Jsa),
            "mfceq" => Ok(Method::Mfceq),
            "random" => Ok(Method::Random),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// A formation change given as offsets inside the goal corner box, so one
/// schedule applies to every generated instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledFormation {
    pub t: u64,
    pub offsets: Vec<[i64; 2]>,
}

fn default_formations() -> usize {
    10
}

fn default_lambdas() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9]
}

fn default_t_max() -> usize {
    256
}

/// One experiment: which instances, which method and its parameters.
///
/// Instance `k` pairs map `k / formations` with formation `k % formations`,
/// so 100 repetitions with 10 formations form a 10 x 10 cross product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub instance: InstanceParams,
    pub method: Method,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    pub repetitions: usize,
    #[serde(default = "default_formations")]
    pub formations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub schedule: Vec<ScheduledFormation>,
    /// Planner horizon; defaults to the planners' own bound.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Step cap of policy rollouts.
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    /// Per-episode wall-clock budget of policy rollouts.
    #[serde(default)]
    pub time_limit_ms: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(instance: InstanceParams, method: Method, repetitions: usize) -> Self {
        Self {
            instance,
            method,
            lambdas: default_lambdas(),
            epsilons: Vec::new(),
            checkpoint: None,
            repetitions,
            formations: default_formations(),
            seed: 0,
            schedule: Vec::new(),
            horizon: None,
            t_max: default_t_max(),
            time_limit_ms: None,
            out: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.instance.validate()?;
        if self.formations == 0 {
            return Err(Error::invalid("formations must be at least 1"));
        }
        let lambdas_ok = !self.lambdas.is_empty() && self.lambdas.iter().all(|l| (0.0..=1.0).contains(l));
        match self.method {
            Method::Spp | Method::Mfceq if !lambdas_ok => {
                return Err(Error::invalid(format!("{} needs a non-empty lambda list in [0, 1]", self.method)));
            }
            Method::Jsa if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !e.is_finite() || *e < 1.0) => {
                return Err(Error::invalid("jsa needs a non-empty epsilon list, every value >= 1"));
            }
            Method::Mfceq if self.checkpoint.is_none() => {
                return Err(Error::invalid("mfceq needs a checkpoint"));
            }
            _ => {}
        }
        if self.schedule.windows(2).any(|w| w[0].t >= w[1].t) {
            return Err(Error::invalid("formation schedule must be strictly increasing in time"));
        }
        let box_size = self.instance.formation_size as i64;
        for change in &self.schedule {
            if change.offsets.len() != self.instance.agents {
                return Err(Error::invalid("scheduled formation has the wrong agent count"));
            }
            if change.offsets.iter().any(|o| o[0] < 0 || o[1] < 0 || o[0] >= box_size || o[1] >= box_size) {
                return Err(Error::invalid("scheduled formation leaves the formation box"));
            }
            let mut seen = change.offsets.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != change.offsets.len() {
                return Err(Error::invalid("scheduled formation repeats a cell"));
            }
        }
        Ok(())
    }

    /// Map and formation seeds of instance `k`.
    pub fn instance_seeds(&self, k: usize) -> (u64, u64) {
        let (map_idx, formation_idx) = (k / self.formations, k % self.formations);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        rng.set_word_pos(2 * map_idx as u128);
        let map_seed: u64 = rng.gen();
        rng.set_stream(2);
        rng.set_word_pos(2 * formation_idx as u128);
        let formation_seed: u64 = rng.gen();
        (map_seed, formation_seed)
    }

    pub fn instance_at(&self, k: usize) -> Result<Instance> {
        let (m, f) = self.instance_seeds(k);
        generate_instance(&self.instance, m, f)
    }

    pub fn instances(&self) -> Result<Vec<Instance>> {
        (0..self.repetitions).map(|k| self.instance_at(k)).collect()
    }

    /// The schedule in absolute cells of `instance`'s map.
    pub fn schedule_for(&self, instance: &Instance) -> Vec<FormationChange> {
        let gx = (instance.map.width() - self.instance.formation_size) as i64;
        let gy = (instance.map.height() - self.instance.formation_size) as i64;
        self.schedule
            .iter()
            .map(|s| FormationChange {
                t: s.t,
                goals: s.offsets.iter().map(|o| Cell::new(gx + o[0], gy + o[1])).collect(),
            })
            .collect()
    }
}
