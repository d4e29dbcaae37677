use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::map::{distance_field, Cell, DistanceField, GridMap};
use crate::error::{Error, Result};
use crate::formation;

/// Cost of a collision-free move or wait off goal.
pub const MOVE_COST: f64 = -0.075;
/// Cost of a move reverted by a collision with an obstacle, the border or an agent.
pub const COLLISION_COST: f64 = -0.5;
/// Reward for arriving on the goal.
pub const GOAL_REWARD: f64 = 3.0;
/// Cost of staying on the goal.
pub const ON_GOAL_COST: f64 = 0.0;

pub const DEFAULT_T_MAX: usize = 256;
pub const DEFAULT_FOV: usize = 9;
/// Obstacle, agent, four move-direction heuristics and the current-cell heuristic.
pub const CHANNELS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Wait,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Wait];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Wait => (0, 0),
        }
    }

    pub fn one_hot(self) -> [f64; 5] {
        let mut v = [0.0; 5];
        v[self.index()] = 1.0;
        v
    }

    /// Inverse of [`Action::one_hot`]; rejects anything that is not a unit vector.
    pub fn from_one_hot(v: &[f64]) -> Result<Action> {
        if v.len() != Self::COUNT {
            return Err(Error::invalid(format!("one-hot action needs 5 entries, got {}", v.len())));
        }
        let ones: Vec<usize> = (0..5).filter(|&i| v[i] == 1.0).collect();
        let zeros = v.iter().filter(|&&x| x == 0.0).count();
        match ones.as_slice() {
            [i] if zeros == 4 => Ok(Self::ALL[*i]),
            _ => Err(Error::invalid(format!("not a one-hot action: {v:?}"))),
        }
    }

    /// Action taking `from` to the adjacent-or-equal cell `to`.
    pub fn between(from: Cell, to: Cell) -> Option<Action> {
        Self::ALL
            .into_iter()
            .find(|a| from.offset(a.delta().0, a.delta().1) == to)
    }
}

/// A map with per-agent starts and goals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub map: Arc<GridMap>,
    pub starts: Vec<Cell>,
    pub goals: Vec<Cell>,
}

pub(crate) fn check_placement(map: &GridMap, cells: &[Cell], what: &str) -> Result<()> {
    let mut seen = HashMap::new();
    for (i, &c) in cells.iter().enumerate() {
        if !map.is_free(c) {
            return Err(Error::invalid(format!("{what} of agent {i} at {c} is not a free cell")));
        }
        if let Some(j) = seen.insert(c, i) {
            return Err(Error::invalid(format!("agents {j} and {i} share {what} {c}")));
        }
    }
    Ok(())
}

impl Instance {
    pub fn new(map: Arc<GridMap>, starts: Vec<Cell>, goals: Vec<Cell>) -> Result<Self> {
        if starts.is_empty() {
            return Err(Error::invalid("instance needs at least one agent"));
        }
        if starts.len() != goals.len() {
            return Err(Error::invalid("start and goal counts differ"));
        }
        check_placement(&map, &starts, "start")?;
        check_placement(&map, &goals, "goal")?;
        Ok(Self { map, starts, goals })
    }

    pub fn agents(&self) -> usize {
        self.starts.len()
    }
}

/// Goal-dependent tables, rebuilt whenever the desired formation changes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoalContext {
    pub goals: Vec<Cell>,
    pub fields: Vec<DistanceField>,
    /// `rel_goals[i][j] = g^j - g^i`.
    pub rel_goals: Vec<Vec<[i64; 2]>>,
}

impl GoalContext {
    pub fn new(map: &GridMap, goals: Vec<Cell>) -> Result<Self> {
        check_placement(map, &goals, "goal")?;
        let fields = goals
            .iter()
            .map(|&g| distance_field(map, g))
            .collect::<Result<Vec<_>>>()?;
        let rel_goals = relative_table(&goals);
        Ok(Self {
            goals,
            fields,
            rel_goals,
        })
    }
}

fn relative_table(cells: &[Cell]) -> Vec<Vec<[i64; 2]>> {
    cells
        .iter()
        .map(|a| cells.iter().map(|b| [b.x - a.x, b.y - a.y]).collect())
        .collect()
}

/// Local view of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub fov: usize,
    /// `CHANNELS` maps of `fov * fov` cells, channel-major then row-major.
    pub channels: Vec<f64>,
    /// `p^{i,j}` for every agent `j`.
    pub rel_positions: Vec<[i64; 2]>,
    /// `g^{i,j}` for every agent `j`.
    pub rel_goals: Vec<[i64; 2]>,
    pub agent: usize,
}

impl Observation {
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.fov * self.fov;
        &self.channels[c * n..(c + 1) * n]
    }

    /// Value at FOV offset `(dx, dy)` from the agent.
    pub fn at(&self, channel: usize, dx: i64, dy: i64) -> f64 {
        let r = (self.fov / 2) as i64;
        let idx = (dy + r) as usize * self.fov + (dx + r) as usize;
        self.channel(channel)[idx]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentEvent {
    Moved,
    Waited,
    Collided,
    ReachedGoal,
    OnGoal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub events: Vec<AgentEvent>,
    /// Per-agent `(cost, -F^j)`.
    pub rewards: Vec<[f64; 2]>,
    /// `F(t)` of the post-move formation against the current goals.
    pub deviation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvConfig {
    pub fov: usize,
    pub t_max: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            fov: DEFAULT_FOV,
            t_max: DEFAULT_T_MAX,
        }
    }
}

/// Episode state of the grid simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEnv {
    map: Arc<GridMap>,
    goals: Arc<GoalContext>,
    positions: Vec<Cell>,
    history: Vec<Vec<Cell>>,
    t: usize,
    config: EnvConfig,
}

impl GridEnv {
    pub fn new(instance: &Instance, config: EnvConfig) -> Result<Self> {
        if config.fov.is_multiple_of(2) {
            return Err(Error::invalid(format!("field of view must be odd, got {}", config.fov)));
        }
        let goals = Arc::new(GoalContext::new(&instance.map, instance.goals.clone())?);
        Ok(Self {
            map: instance.map.clone(),
            goals,
            positions: instance.starts.clone(),
            history: vec![instance.starts.clone()],
            t: 0,
            config,
        })
    }

    pub fn map(&self) -> &Arc<GridMap> {
        &self.map
    }

    pub fn goal_context(&self) -> &Arc<GoalContext> {
        &self.goals
    }

    pub fn goals(&self) -> &[Cell] {
        &self.goals.goals
    }

    pub fn positions(&self) -> &[Cell] {
        &self.positions
    }

    /// Joint positions for `t = 0..=time()`.
    pub fn history(&self) -> &[Vec<Cell>] {
        &self.history
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn config(&self) -> EnvConfig {
        self.config
    }

    pub fn agents(&self) -> usize {
        self.positions.len()
    }

    pub fn all_on_goal(&self) -> bool {
        self.positions.iter().zip(&self.goals.goals).all(|(p, g)| p == g)
    }

    pub fn is_terminal(&self) -> bool {
        self.all_on_goal() || self.t >= self.config.t_max
    }

    pub fn current_deviation(&self) -> formation::DeviationResult {
        formation::deviation(&self.positions, &self.goals.goals).expect("positions and goals share shape")
    }

    /// Replaces the desired formation; path history is kept.
    pub fn set_desired_formation(&mut self, new_goals: Vec<Cell>) -> Result<()> {
        if new_goals.len() != self.positions.len() {
            return Err(Error::invalid("new formation has a different agent count"));
        }
        if new_goals == self.goals.goals {
            return Ok(());
        }
        self.goals = Arc::new(GoalContext::new(&self.map, new_goals)?);
        Ok(())
    }

    pub fn observe(&self, agent: usize) -> Observation {
        observe(&self.map, &self.goals, &self.positions, agent, self.config.fov)
    }

    /// Advances one time step. Moves that leave the map, enter an obstacle or
    /// cause a vertex or edge collision are reverted, repeatedly, until no
    /// conflict remains.
    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        let m = self.positions.len();
        if actions.len() != m {
            return Err(Error::invalid(format!("expected {m} actions, got {}", actions.len())));
        }
        let current = &self.positions;
        let mut next: Vec<Cell> = current
            .iter()
            .zip(actions)
            .map(|(p, a)| p.offset(a.delta().0, a.delta().1))
            .collect();
        let mut collided = vec![false; m];
        for i in 0..m {
            if !self.map.is_free(next[i]) {
                next[i] = current[i];
                collided[i] = true;
            }
        }
        resolve_conflicts(current, &mut next, &mut collided);

        let dev = formation::deviation(&next, &self.goals.goals).expect("shape checked");
        let mut events = Vec::with_capacity(m);
        let mut rewards = Vec::with_capacity(m);
        for i in 0..m {
            let goal = self.goals.goals[i];
            let (event, cost) = if collided[i] {
                (AgentEvent::Collided, COLLISION_COST)
            } else if next[i] == goal && current[i] != goal {
                (AgentEvent::ReachedGoal, GOAL_REWARD)
            } else if next[i] == goal {
                (AgentEvent::OnGoal, ON_GOAL_COST)
            } else if next[i] == current[i] {
                (AgentEvent::Waited, MOVE_COST)
            } else {
                (AgentEvent::Moved, MOVE_COST)
            };
            events.push(event);
            rewards.push([cost, -(dev.per_agent[i] as f64)]);
        }
        self.positions = next;
        self.history.push(self.positions.clone());
        self.t += 1;
        Ok(StepOutcome {
            events,
            rewards,
            deviation: dev.total,
        })
    }
}

/// Reverts movers involved in vertex or edge conflicts until a fixed point.
/// Each round reverts every conflicting mover at once, so the result does not
/// depend on agent order.
fn resolve_conflicts(current: &[Cell], next: &mut [Cell], collided: &mut [bool]) {
    let m = current.len();
    loop {
        let mut occupants: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, &c) in next.iter().enumerate() {
            occupants.entry(c).or_default().push(i);
        }
        let mut revert = vec![false; m];
        for agents in occupants.values().filter(|a| a.len() > 1) {
            for &i in agents {
                if next[i] != current[i] {
                    revert[i] = true;
                }
            }
        }
        let origin: HashMap<Cell, usize> = current.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        for i in 0..m {
            if next[i] == current[i] {
                continue;
            }
            if let Some(&j) = origin.get(&next[i]) {
                if j != i && next[j] == current[i] {
                    revert[i] = true;
                    revert[j] = true;
                }
            }
        }
        if !revert.iter().any(|&r| r) {
            return;
        }
        for i in 0..m {
            if revert[i] {
                next[i] = current[i];
                collided[i] = true;
            }
        }
    }
}

/// Builds the local observation of `agent`. Cells outside the map read as
/// obstacles; heuristic values are shortest-path distances divided by
/// `width + height`, capped at 1.
pub fn observe(map: &GridMap, goals: &GoalContext, positions: &[Cell], agent: usize, fov: usize) -> Observation {
    let n = fov * fov;
    let r = (fov / 2) as i64;
    let mut channels = vec![0.0; CHANNELS * n];
    let me = positions[agent];
    let field = &goals.fields[agent];
    let scale = (map.width() + map.height()) as f64;
    let norm = |c: Cell| -> f64 {
        if !map.is_free(c) {
            return 1.0;
        }
        field.get(c).map_or(1.0, |d| (d as f64 / scale).min(1.0))
    };
    for dy in -r..=r {
        for dx in -r..=r {
            let idx = (dy + r) as usize * fov + (dx + r) as usize;
            let c = me.offset(dx, dy);
            if !map.is_free(c) {
                channels[idx] = 1.0;
            }
            for (k, a) in Action::ALL.iter().enumerate() {
                let (ax, ay) = a.delta();
                channels[(2 + k) * n + idx] = norm(c.offset(ax, ay));
            }
        }
    }
    for (j, p) in positions.iter().enumerate() {
        let (dx, dy) = (p.x - me.x, p.y - me.y);
        if j != agent && dx.abs() <= r && dy.abs() <= r {
            channels[n + (dy + r) as usize * fov + (dx + r) as usize] = 1.0;
        }
    }
    Observation {
        fov,
        channels,
        rel_positions: positions.iter().map(|p| [p.x - me.x, p.y - me.y]).collect(),
        rel_goals: goals.rel_goals[agent].clone(),
        agent,
    }
}
