use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::solution::Solution;
use crate::formation;
use crate::grid::{Cell, Instance};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    AgentCount { expected: usize, found: usize },
    EmptyPath { agent: usize },
    WrongStart { agent: usize, expected: Cell, found: Cell },
    WrongGoal { agent: usize, expected: Cell, found: Cell },
    Blocked { agent: usize, cell: Cell, t: usize },
    Jump { agent: usize, from: Cell, to: Cell, t: usize },
    VertexCollision { a: usize, b: usize, cell: Cell, t: usize },
    EdgeCollision { a: usize, b: usize, from: Cell, to: Cell, t: usize },
    ValueMismatch { claimed: (u64, u64), actual: (u64, u64) },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::AgentCount { expected, found } => write!(f, "expected {expected} paths, found {found}"),
            Violation::EmptyPath { agent } => write!(f, "agent {agent} has an empty path"),
            Violation::WrongStart { agent, expected, found } => {
                write!(f, "agent {agent} starts at {found}, expected {expected}")
            }
            Violation::WrongGoal { agent, expected, found } => {
                write!(f, "agent {agent} ends at {found}, expected {expected}")
            }
            Violation::Blocked { agent, cell, t } => write!(f, "agent {agent} on blocked cell {cell} at t={t}"),
            Violation::Jump { agent, from, to, t } => {
                write!(f, "agent {agent} jumps from {from} to {to} at t={t}")
            }
            Violation::VertexCollision { a, b, cell, t } => {
                write!(f, "vertex collision <{a}, {b}, {cell}, {t}>")
            }
            Violation::EdgeCollision { a, b, from, to, t } => {
                write!(f, "edge collision <{a}, {b}, {from}, {to}, {t}>")
            }
            Violation::ValueMismatch { claimed, actual } => {
                write!(f, "claimed value {claimed:?} but paths score {actual:?}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violation: Option<Violation>,
}

impl ValidationReport {
    fn fail(v: Violation) -> Self {
        Self {
            valid: false,
            violation: Some(v),
        }
    }
}

/// Checks endpoints, adjacency, obstacles, both collision types at every
/// time step (agents hold their last cell) and the claimed value.
pub fn validate_solution(instance: &Instance, solution: &Solution) -> ValidationReport {
    match first_violation(instance, solution) {
        Some(v) => ValidationReport::fail(v),
        None => ValidationReport {
            valid: true,
            violation: None,
        },
    }
}

fn first_violation(instance: &Instance, solution: &Solution) -> Option<Violation> {
    let paths = &solution.paths;
    if paths.len() != instance.agents() {
        return Some(Violation::AgentCount {
            expected: instance.agents(),
            found: paths.len(),
        });
    }
    for (i, path) in paths.iter().enumerate() {
        let (Some(&first), Some(&last)) = (path.first(), path.last()) else {
            return Some(Violation::EmptyPath { agent: i });
        };
        if first != instance.starts[i] {
            return Some(Violation::WrongStart {
                agent: i,
                expected: instance.starts[i],
                found: first,
            });
        }
        if last != instance.goals[i] {
            return Some(Violation::WrongGoal {
                agent: i,
                expected: instance.goals[i],
                found: last,
            });
        }
    }
    let horizon = paths.iter().map(|p| p.len() - 1).max().unwrap_or(0);
    let at = |i: usize, t: usize| paths[i][t.min(paths[i].len() - 1)];
    for t in 0..=horizon {
        let mut seen: HashMap<Cell, usize> = HashMap::new();
        for i in 0..paths.len() {
            let c = at(i, t);
            if !instance.map.is_free(c) {
                return Some(Violation::Blocked { agent: i, cell: c, t });
            }
            if t > 0 && !at(i, t - 1).is_adjacent_or_equal(c) {
                return Some(Violation::Jump {
                    agent: i,
                    from: at(i, t - 1),
                    to: c,
                    t,
                });
            }
            if let Some(j) = seen.insert(c, i) {
                return Some(Violation::VertexCollision { a: j, b: i, cell: c, t });
            }
        }
        if t > 0 {
            for i in 0..paths.len() {
                for j in i + 1..paths.len() {
                    let (ui, vi) = (at(i, t - 1), at(i, t));
                    let (uj, vj) = (at(j, t - 1), at(j, t));
                    if ui != vi && ui == vj && vi == uj {
                        return Some(Violation::EdgeCollision {
                            a: i,
                            b: j,
                            from: ui,
                            to: vi,
                            t,
                        });
                    }
                }
            }
        }
    }
    let actual = formation::evaluate_solution(paths, &instance.goals).ok()?;
    if actual != solution.value {
        return Some(Violation::ValueMismatch {
            claimed: (solution.value.makespan, solution.value.deviation_sum),
            actual: (actual.makespan, actual.deviation_sum),
        });
    }
    None
}
