use std::collections::{HashMap, HashSet};

use crate::grid::Cell;

/// Space-time reservations of already planned agents. Agents stay parked on
/// the last cell of their path forever.
#[derive(Debug, Clone, Default)]
pub struct Reservation {
    vertex: HashSet<(Cell, usize)>,
    /// Undirected edge, stored with the smaller cell first, and arrival time.
    edges: HashSet<(Cell, Cell, usize)>,
    parked: HashMap<Cell, usize>,
    last_use: HashMap<Cell, usize>,
    horizon: usize,
}

fn undirected(a: Cell, b: Cell) -> (Cell, Cell) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Reservation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn reserve_path(&mut self, path: &[Cell]) {
        for (t, &c) in path.iter().enumerate() {
            self.vertex.insert((c, t));
            let last = self.last_use.entry(c).or_insert(t);
            *last = (*last).max(t);
            if t > 0 && path[t - 1] != c {
                let (a, b) = undirected(path[t - 1], c);
                self.edges.insert((a, b, t));
            }
        }
        if let Some(&goal) = path.last() {
            self.parked.insert(goal, path.len() - 1);
        }
        self.horizon = self.horizon.max(path.len().saturating_sub(1));
    }

    pub fn vertex_free(&self, c: Cell, t: usize) -> bool {
        !self.vertex.contains(&(c, t)) && self.parked.get(&c).is_none_or(|&since| t < since)
    }

    /// Whether moving `from -> to` arriving at `t` avoids reserved edge traversals.
    pub fn edge_free(&self, from: Cell, to: Cell, t: usize) -> bool {
        if from == to {
            return true;
        }
        let (a, b) = undirected(from, to);
        !self.edges.contains(&(a, b, t))
    }

    /// Whether an agent may stay on `c` from `t` onwards.
    pub fn can_park(&self, c: Cell, t: usize) -> bool {
        !self.parked.contains_key(&c) && self.last_use.get(&c).is_none_or(|&last| last < t)
    }
}
