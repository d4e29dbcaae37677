//! Joint transitions and the replay buffer.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use rand::Rng;

use super::policy::MeanAction;
use crate::error::{Error, Result};
use crate::grid::{observe, Action, Cell, GoalContext, GridMap, Observation};

/// One joint step. Observations are rebuilt on demand from the stored
/// positions, which keeps the buffer small.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub map: Arc<GridMap>,
    pub goals: Arc<GoalContext>,
    pub positions: Vec<Cell>,
    pub actions: Vec<Action>,
    pub rewards: Vec<[f64; 2]>,
    pub next_positions: Vec<Cell>,
    /// Mean actions the actions were chosen under.
    pub mean_actions: Vec<MeanAction>,
    /// Mean actions of this step, used at the next state.
    pub next_mean_actions: Vec<MeanAction>,
    pub terminal: bool,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        let m = self.positions.len();
        let lens = [
            self.actions.len(),
            self.rewards.len(),
            self.next_positions.len(),
            self.mean_actions.len(),
            self.next_mean_actions.len(),
            self.goals.goals.len(),
        ];
        if m == 0 || lens.iter().any(|&l| l != m) {
            return Err(Error::invalid("transition fields disagree on the agent count"));
        }
        if self.rewards.iter().any(|r| !r[0].is_finite() || !r[1].is_finite() || r[1] > 0.0) {
            return Err(Error::invalid("deviation reward must be finite and <= 0"));
        }
        Ok(())
    }

    pub fn agents(&self) -> usize {
        self.positions.len()
    }

    pub fn observation(&self, agent: usize, fov: usize) -> Observation {
        observe(&self.map, &self.goals, &self.positions, agent, fov)
    }

    pub fn next_observation(&self, agent: usize, fov: usize) -> Observation {
        observe(&self.map, &self.goals, &self.next_positions, agent, fov)
    }

    pub fn reward_sum(&self) -> [f64; 2] {
        self.rewards.iter().fold([0.0, 0.0], |acc, r| [acc[0] + r[0], acc[1] + r[1]])
    }
}

/// Bounded FIFO with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Arc<Transition>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(Arc::new(t));
    }

    /// `n` draws with replacement, uniform over the current contents.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Arc<Transition>> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| self.items[rng.gen_range(0..self.items.len())].clone()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Transition>> {
        self.items.iter()
    }
}

/// Buffer shared between rollout workers and a learner. Each append and each
/// sample holds the lock for its whole duration.
#[derive(Debug)]
pub struct SharedReplay(Mutex<ReplayBuffer>);

impl SharedReplay {
    pub fn new(buffer: ReplayBuffer) -> Self {
        Self(Mutex::new(buffer))
    }

    pub fn push(&self, t: Transition) {
        self.0.lock().expect("replay lock poisoned").push(t);
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Arc<Transition>> {
        self.0.lock().expect("replay lock poisoned").sample(n, rng)
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("replay lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    pub(crate) fn dummy(tag: i64) -> Transition {
        let map = Arc::new(GridMap::empty(4, 4).unwrap());
        let goals = Arc::new(GoalContext::new(&map, vec![Cell::new(3, 3)]).unwrap());
        Transition {
            map,
            goals,
            positions: vec![Cell::new(tag.rem_euclid(4), 0)],
            actions: vec![Action::Wait],
            rewards: vec![[-0.075, 0.0]],
            next_positions: vec![Cell::new(tag.rem_euclid(4), 0)],
            mean_actions: vec![MeanAction::uniform()],
            next_mean_actions: vec![MeanAction::uniform()],
            terminal: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for k in 0..5 {
            b.push(dummy(k));
        }
        assert_eq!(b.len(), 3);
        let xs: Vec<i64> = b.iter().map(|t| t.positions[0].x).collect();
        assert_eq!(xs, vec![2, 3, 0]);
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(4).unwrap();
        for k in 0..4 {
            b.push(dummy(k));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 4];
        for t in b.sample(40_000, &mut rng) {
            counts[t.positions[0].x as usize] += 1;
        }
        assert!(counts.iter().all(|&c| (c as f64 / 40_000.0 - 0.25).abs() < 0.015));
    }

    #[test]
    fn shared_buffer_under_threads() {
        let shared = Arc::new(SharedReplay::new(ReplayBuffer::new(50).unwrap()));
        let handles: Vec<_> = (0..4)
            .map(|w| {
                let s = shared.clone();
                std::thread::spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(w);
                    for k in 0..100 {
                        s.push(dummy(k));
                        let _ = s.sample(2, &mut rng);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(shared.len(), 50);
    }

    #[test]
    fn reward_sign_is_checked() {
        let mut t = dummy(0);
        assert!(t.validate().is_ok());
        t.rewards[0][1] = 0.5;
        assert!(t.validate().is_err());
    }
}
