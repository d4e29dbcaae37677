//! Joint-state A* with an epsilon-constraint focal search.
//!
//! The OPEN pass is an A* over joint states ordered by the makespan lower
//! bound `t + max_i dist_i`, which yields the optimal makespan `T*`. Each
//! epsilon then runs a FOCAL pass that admits the nodes whose bound is within
//! `floor(epsilon * T*)` and expands them in order of accumulated formation
//! deviation. That pass returns the least-deviation solution (ties broken by
//! makespan) among all solutions of makespan at most the bound, so sweeping
//! epsilon over every integer bound recovers the whole Pareto frontier.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;

use super::solution::{split_joint_path, Solution};
use crate::error::{Error, Result};
use crate::formation::{self, pareto_filter};
use crate::grid::{distance_field, Action, Cell, DistanceField, Instance};

/// Joint search is refused above this many agents.
pub const MAX_AGENTS: usize = 5;

struct JointSpace<'a> {
    instance: &'a Instance,
    fields: Vec<DistanceField>,
}

type Joint = Vec<Cell>;

impl<'a> JointSpace<'a> {
    fn new(instance: &'a Instance) -> Result<Self> {
        let m = instance.agents();
        if m > MAX_AGENTS {
            return Err(Error::TooManyAgents {
                agents: m,
                limit: MAX_AGENTS,
            });
        }
        let fields = instance
            .goals
            .iter()
            .map(|&g| distance_field(&instance.map, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { instance, fields })
    }

    /// Largest remaining distance, `None` when some agent cannot reach its goal.
    fn heuristic(&self, joint: &[Cell]) -> Option<usize> {
        joint
            .iter()
            .zip(&self.fields)
            .map(|(&c, f)| f.get(c).map(|d| d as usize))
            .try_fold(0, |acc, d| d.map(|d| acc.max(d)))
    }

    fn deviation(&self, joint: &[Cell]) -> u64 {
        formation::deviation(joint, &self.instance.goals).expect("joint state matches goals").total
    }

    fn is_goal(&self, joint: &[Cell]) -> bool {
        joint == self.instance.goals.as_slice()
    }

    /// All joint successors without vertex or edge collisions.
    fn successors(&self, joint: &[Cell], out: &mut Vec<Joint>) {
        out.clear();
        let map = &self.instance.map;
        let options: Vec<Vec<Cell>> = joint
            .iter()
            .map(|&c| {
                Action::ALL
                    .iter()
                    .map(|a| c.offset(a.delta().0, a.delta().1))
                    .filter(|&n| map.is_free(n))
                    .collect()
            })
            .collect();
        let mut current = Vec::with_capacity(joint.len());
        self.extend(joint, &options, &mut current, out);
    }

    fn extend(&self, joint: &[Cell], options: &[Vec<Cell>], partial: &mut Vec<Cell>, out: &mut Vec<Joint>) {
        let i = partial.len();
        if i == joint.len() {
            out.push(partial.clone());
            return;
        }
        for &next in &options[i] {
            let clash = (0..i).any(|j| partial[j] == next || (partial[j] == joint[i] && next == joint[j] && next != partial[j]));
            if clash {
                continue;
            }
            partial.push(next);
            self.extend(joint, options, partial, out);
            partial.pop();
        }
    }
}

struct Found {
    joint_path: Vec<Joint>,
}

fn rebuild(arena: &[(Joint, Option<usize>)], mut id: usize) -> Vec<Joint> {
    let mut states = vec![arena[id].0.clone()];
    while let Some(parent) = arena[id].1 {
        states.push(arena[parent].0.clone());
        id = parent;
    }
    states.reverse();
    states
}

/// A* on the makespan bound, deviation as tie-breaker. Returns `T*`.
fn optimal_makespan(space: &JointSpace, horizon: usize) -> Result<usize> {
    let start = space.instance.starts.clone();
    let h0 = space.heuristic(&start).ok_or(Error::NoSolution { horizon })?;
    let mut open = BinaryHeap::new();
    let mut seen: HashMap<(Joint, usize), ()> = HashMap::new();
    let mut buf = Vec::new();
    open.push(Reverse((h0, space.deviation(&start), 0usize, start)));
    while let Some(Reverse((_, dev, t, joint))) = open.pop() {
        if seen.insert((joint.clone(), t), ()).is_some() {
            continue;
        }
        if space.is_goal(&joint) {
            return Ok(t);
        }
        if t >= horizon {
            continue;
        }
        space.successors(&joint, &mut buf);
        for next in buf.drain(..) {
            let Some(h) = space.heuristic(&next) else { continue };
            if t + 1 + h > horizon || seen.contains_key(&(next.clone(), t + 1)) {
                continue;
            }
            let d = dev + space.deviation(&next);
            open.push(Reverse((t + 1 + h, d, t + 1, next)));
        }
    }
    Err(Error::NoSolution { horizon })
}

/// Least accumulated deviation among solutions with makespan <= `bound`.
fn focal_pass(space: &JointSpace, bound: usize) -> Option<Found> {
    let start = space.instance.starts.clone();
    let h0 = space.heuristic(&start)?;
    if h0 > bound {
        return None;
    }
    let mut arena: Vec<(Joint, Option<usize>)> = vec![(start.clone(), None)];
    let mut index: HashMap<(Joint, usize), u64> = HashMap::new();
    let mut closed: HashMap<(Joint, usize), ()> = HashMap::new();
    let mut focal = BinaryHeap::new();
    let mut buf = Vec::new();
    let d0 = space.deviation(&start);
    index.insert((start, 0), d0);
    // (accumulated deviation, makespan bound, time, arena id)
    focal.push(Reverse((d0, h0, 0usize, 0usize)));
    while let Some(Reverse((dev, _, t, id))) = focal.pop() {
        let joint = arena[id].0.clone();
        if closed.insert((joint.clone(), t), ()).is_some() {
            continue;
        }
        if space.is_goal(&joint) {
            return Some(Found {
                joint_path: rebuild(&arena, id),
            });
        }
        if t >= bound {
            continue;
        }
        space.successors(&joint, &mut buf);
        for next in buf.drain(..) {
            let Some(h) = space.heuristic(&next) else { continue };
            let f = t + 1 + h;
            if f > bound {
                continue;
            }
            let key = (next, t + 1);
            if closed.contains_key(&key) {
                continue;
            }
            let d = dev + space.deviation(&key.0);
            if index.get(&key).is_some_and(|&old| old <= d) {
                continue;
            }
            index.insert(key.clone(), d);
            arena.push((key.0, Some(id)));
            focal.push(Reverse((d, f, t + 1, arena.len() - 1)));
        }
    }
    None
}

fn solve_bounds(instance: &Instance, space: &JointSpace, bounds: &[usize]) -> Result<Vec<Solution>> {
    let found: Vec<Option<Found>> = bounds.par_iter().map(|&b| focal_pass(space, b)).collect();
    let mut solutions = Vec::new();
    for f in found.into_iter().flatten() {
        solutions.push(Solution::scored(instance, split_joint_path(&f.joint_path))?);
    }
    let front = pareto_filter(&solutions.iter().map(|s| s.value).collect::<Vec<_>>());
    Ok(front
        .into_iter()
        .map(|v| solutions.iter().find(|s| s.value == v).expect("front value comes from a solution").clone())
        .collect())
}

/// Focal search for each `epsilon`, filtered to the non-dominated solutions.
pub fn jsa_pareto(instance: &Instance, epsilons: &[f64], horizon: usize) -> Result<Vec<Solution>> {
    if epsilons.is_empty() || epsilons.iter().any(|&e| !e.is_finite() || e < 1.0) {
        return Err(Error::invalid("epsilons must be finite and >= 1"));
    }
    let space = JointSpace::new(instance)?;
    let best = optimal_makespan(&space, horizon)?;
    let bounds: Vec<usize> = epsilons
        .iter()
        .map(|&e| ((e * best as f64 + 1e-9).floor() as usize).min(horizon))
        .collect();
    solve_bounds(instance, &space, &bounds)
}

/// Sweeps every integer makespan bound from `T*` to `horizon`.
pub fn jsa_frontier(instance: &Instance, horizon: usize) -> Result<Vec<Solution>> {
    let space = JointSpace::new(instance)?;
    let best = optimal_makespan(&space, horizon)?;
    let bounds: Vec<usize> = (best..=horizon).collect();
    solve_bounds(instance, &space, &bounds)
}

/// Epsilons equivalent to [`jsa_frontier`] for an instance whose optimal
/// makespan is `best`.
pub fn dense_epsilons(best: usize, horizon: usize) -> Vec<f64> {
    if best == 0 {
        return vec![1.0];
    }
    (best..=horizon).map(|b| b as f64 / best as f64).collect()
}
