//! Scalarized prioritized planning: agents are planned one at a time by a
//! space-time A* whose f-value mixes makespan and the deviation of the agent
//! relative to the agents planned before it.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use super::reservation::Reservation;
use super::solution::Solution;
use crate::error::{Error, Result};
use crate::grid::{Action, Cell, Instance};

pub fn default_horizon(instance: &Instance) -> usize {
    4 * (instance.map.width() + instance.map.height())
}

#[derive(Debug, Clone, Copy)]
struct Node {
    f: f64,
    g: f64,
    t: usize,
    cell: Cell,
    id: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl Ord for Node {
    // Max-heap order: smallest f first, then largest g, then (t, x, y).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| (other.t, other.cell.x, other.cell.y).cmp(&(self.t, self.cell.x, self.cell.y)))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Deviation term of one agent against the agents already planned, with
/// those agents' coordinate differences to their goals fixed per time step.
struct PartialDeviation<'a> {
    planned: &'a [(Vec<Cell>, Cell)],
    goal: Cell,
    scratch_x: Vec<i64>,
    scratch_y: Vec<i64>,
}

impl<'a> PartialDeviation<'a> {
    fn new(planned: &'a [(Vec<Cell>, Cell)], goal: Cell) -> Self {
        Self {
            planned,
            goal,
            scratch_x: Vec::with_capacity(planned.len() + 1),
            scratch_y: Vec::with_capacity(planned.len() + 1),
        }
    }

    fn at(&mut self, cell: Cell, t: usize) -> u64 {
        if self.planned.is_empty() {
            return 0;
        }
        self.scratch_x.clear();
        self.scratch_y.clear();
        for (path, goal) in self.planned {
            let p = path[t.min(path.len() - 1)];
            self.scratch_x.push(p.x - goal.x);
            self.scratch_y.push(p.y - goal.y);
        }
        let (rx, ry) = (cell.x - self.goal.x, cell.y - self.goal.y);
        self.scratch_x.push(rx);
        self.scratch_y.push(ry);
        let mid = (self.scratch_x.len() - 1) / 2;
        let mx = *self.scratch_x.select_nth_unstable(mid).1;
        let my = *self.scratch_y.select_nth_unstable(mid).1;
        (rx - mx).unsigned_abs() + (ry - my).unsigned_abs()
    }
}

/// Single-agent space-time A* under `reservation`. Returns the path and its
/// scalarized cost `lambda * T + (1 - lambda) * sum_t F^i_t`.
pub(crate) fn low_level(
    instance: &Instance,
    agent: usize,
    lambda: f64,
    planned: &[(Vec<Cell>, Cell)],
    reservation: &Reservation,
    horizon: usize,
) -> Option<(Vec<Cell>, f64)> {
    let start = instance.starts[agent];
    let goal = instance.goals[agent];
    let map = &instance.map;
    let mut partial = PartialDeviation::new(planned, goal);
    let h = |c: Cell| lambda * c.manhattan(goal) as f64;

    let mut arena: Vec<(Cell, usize, Option<usize>)> = vec![(start, 0, None)];
    let mut open = BinaryHeap::new();
    let mut closed: HashSet<(Cell, usize)> = HashSet::new();
    let mut best_g: HashMap<(Cell, usize), f64> = HashMap::new();
    if !reservation.vertex_free(start, 0) {
        return None;
    }
    open.push(Node {
        f: h(start),
        g: 0.0,
        t: 0,
        cell: start,
        id: 0,
    });
    while let Some(node) = open.pop() {
        if !closed.insert((node.cell, node.t)) {
            continue;
        }
        if node.cell == goal && reservation.can_park(goal, node.t) {
            let mut path = Vec::with_capacity(node.t + 1);
            let mut cur = Some(node.id);
            while let Some(id) = cur {
                path.push(arena[id].0);
                cur = arena[id].2;
            }
            path.reverse();
            return Some((path, node.g));
        }
        if node.t >= horizon {
            continue;
        }
        let t = node.t + 1;
        for a in Action::ALL {
            let (dx, dy) = a.delta();
            let next = node.cell.offset(dx, dy);
            if !map.is_free(next)
                || !reservation.vertex_free(next, t)
                || !reservation.edge_free(node.cell, next, t)
                || closed.contains(&(next, t))
            {
                continue;
            }
            let g = node.g + lambda + (1.0 - lambda) * partial.at(next, t) as f64;
            let key = (next, t);
            if best_g.get(&key).is_some_and(|&old| old <= g) {
                continue;
            }
            best_g.insert(key, g);
            arena.push((next, t, Some(node.id)));
            open.push(Node {
                f: g + h(next),
                g,
                t,
                cell: next,
                id: arena.len() - 1,
            });
        }
    }
    None
}

/// Plans agents in `priority_order`, each avoiding the agents planned before it.
pub fn spp_plan(instance: &Instance, lambda: f64, priority_order: &[usize], horizon: usize) -> Result<Solution> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    let m = instance.agents();
    let mut seen = vec![false; m];
    if priority_order.len() != m || priority_order.iter().any(|&i| i >= m || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::invalid("priority order must be a permutation of the agents"));
    }
    let mut reservation = Reservation::new();
    let mut planned: Vec<(Vec<Cell>, Cell)> = Vec::with_capacity(m);
    let mut paths = vec![Vec::new(); m];
    for &agent in priority_order {
        let (path, _) = low_level(instance, agent, lambda, &planned, &reservation, horizon)
            .ok_or(Error::NoPath { agent, horizon })?;
        reservation.reserve_path(&path);
        planned.push((path.clone(), instance.goals[agent]));
        paths[agent] = path;
    }
    Solution::scored(instance, paths)
}
