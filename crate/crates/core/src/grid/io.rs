//! Text map and JSON scenario formats, both tagged `maif/1`.
//!
//! Map file:
//!
//! ```text
//! maif/1
//! 4 3
//! ....
//! .@@.
//! ....
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::env::Instance;
use super::map::{Cell, GridMap};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "maif/1";

pub fn map_to_string(map: &GridMap) -> String {
    let mut s = format!("{FORMAT_TAG}\n{} {}\n", map.width(), map.height());
    for row in map.obstacles().chunks(map.width()) {
        s.extend(row.iter().map(|&o| if o { '@' } else { '.' }));
        s.push('\n');
    }
    s
}

/// Parses a map file. The clear-corner size is not stored, so it reads back as 0.
pub fn parse_map(text: &str) -> Result<GridMap> {
    let mut lines = text.lines();
    match lines.next() {
        Some(tag) if tag.trim() == FORMAT_TAG => {}
        other => {
            return Err(Error::Parse(format!(
                "expected '{FORMAT_TAG}' header, found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let dims = lines.next().ok_or_else(|| Error::Parse("missing dimensions line".into()))?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad dimension '{t}'"))))
        .collect::<Result<_>>()?;
    let [width, height] = dims[..] else {
        return Err(Error::Parse("dimensions line must be 'width height'".into()));
    };
    let mut obstacles = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing map row {y}")))?
            .trim_end_matches('\r');
        if row.chars().count() != width {
            return Err(Error::Parse(format!("row {y} has {} cells, expected {width}", row.len())));
        }
        for ch in row.chars() {
            obstacles.push(match ch {
                '.' => false,
                '@' => true,
                other => return Err(Error::Parse(format!("unknown map symbol '{other}' in row {y}"))),
            });
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(Error::Parse("trailing content after map rows".into()));
    }
    GridMap::new(width, height, obstacles, 0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormationChange {
    pub t: u64,
    pub goals: Vec<Cell>,
}

/// Scenario file contents. `map` is a path relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: String,
    pub map: String,
    pub agents: usize,
    pub starts: Vec<Cell>,
    pub goals: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<FormationChange>,
}

impl Scenario {
    pub fn new(map: impl Into<String>, instance: &Instance, schedule: Vec<FormationChange>) -> Self {
        Self {
            version: FORMAT_TAG.to_string(),
            map: map.into(),
            agents: instance.agents(),
            starts: instance.starts.clone(),
            goals: instance.goals.clone(),
            schedule,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text)?;
        if sc.version != FORMAT_TAG {
            return Err(Error::Parse(format!("unsupported scenario version '{}'", sc.version)));
        }
        if sc.agents != sc.starts.len() || sc.agents != sc.goals.len() {
            return Err(Error::Parse("agent count disagrees with starts/goals".into()));
        }
        if sc.schedule.iter().any(|c| c.goals.len() != sc.agents) {
            return Err(Error::Parse("scheduled formation has the wrong agent count".into()));
        }
        if sc.schedule.windows(2).any(|w| w[0].t > w[1].t) {
            return Err(Error::Parse("formation schedule must be sorted by time".into()));
        }
        Ok(sc)
    }

    pub fn instance(&self, map: Arc<GridMap>) -> Result<Instance> {
        Instance::new(map, self.starts.clone(), self.goals.clone())
    }
}

/// Loads a scenario and the map it references.
pub fn load_scenario(path: &Path) -> Result<(Scenario, Instance)> {
    let sc = Scenario::from_json(&std::fs::read_to_string(path)?)?;
    let map_path = path.parent().unwrap_or_else(|| Path::new(".")).join(&sc.map);
    let map = parse_map(&std::fs::read_to_string(&map_path)?)?;
    let inst = sc.instance(Arc::new(map))?;
    Ok((sc, inst))
}
