use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::{self, BiObjectiveValue};
use crate::grid::io::FORMAT_TAG;
use crate::grid::{Cell, Instance};

/// Collision-free per-agent paths and their objective value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub paths: Vec<Vec<Cell>>,
    pub value: BiObjectiveValue,
}

impl Solution {
    /// Scores `paths` against the instance goals.
    pub fn scored(instance: &Instance, paths: Vec<Vec<Cell>>) -> Result<Self> {
        let value = formation::evaluate_solution(&paths, &instance.goals)?;
        Ok(Self { paths, value })
    }

    pub fn to_json(&self) -> String {
        let file = SolutionFile {
            version: FORMAT_TAG.to_string(),
            makespan: self.value.makespan,
            deviation_sum: self.value.deviation_sum,
            agents: self.value.agents,
            form_dev_avg: self.value.form_dev_avg(),
            paths: self.paths.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("solution serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SolutionFile = serde_json::from_str(text)?;
        if file.version != FORMAT_TAG {
            return Err(Error::Parse(format!("unsupported solution version '{}'", file.version)));
        }
        if file.agents == 0 || file.agents as usize != file.paths.len() {
            return Err(Error::Parse("agent count disagrees with paths".into()));
        }
        Ok(Self {
            paths: file.paths,
            value: BiObjectiveValue::new(file.makespan, file.deviation_sum, file.agents),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SolutionFile {
    version: String,
    makespan: u64,
    deviation_sum: u64,
    agents: u64,
    form_dev_avg: f64,
    paths: Vec<Vec<Cell>>,
}

/// Splits a joint trajectory into per-agent paths, dropping each agent's
/// trailing waits on its final cell.
pub fn split_joint_path(joint: &[Vec<Cell>]) -> Vec<Vec<Cell>> {
    let agents = joint.first().map_or(0, |s| s.len());
    (0..agents)
        .map(|i| {
            let mut path: Vec<Cell> = joint.iter().map(|s| s[i]).collect();
            trim_trailing_waits(&mut path);
            path
        })
        .collect()
}

pub fn trim_trailing_waits(path: &mut Vec<Cell>) {
    while path.len() > 1 && path[path.len() - 1] == path[path.len() - 2] {
        path.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let s = Solution {
            paths: vec![vec![Cell::new(0, 0), Cell::new(1, 0)], vec![Cell::new(2, 2)]],
            value: BiObjectiveValue::new(1, 3, 2),
        };
        let text = s.to_json();
        assert!(text.contains("\"form_dev_avg\": 1.5"));
        assert_eq!(Solution::from_json(&text).unwrap(), s);
    }

    #[test]
    fn split_trims_goal_waits() {
        let a = Cell::new(0, 0);
        let b = Cell::new(1, 0);
        let c = Cell::new(5, 5);
        let joint = vec![vec![a, c], vec![b, c], vec![b, c]];
        assert_eq!(split_joint_path(&joint), vec![vec![a, b], vec![c]]);
    }
}
