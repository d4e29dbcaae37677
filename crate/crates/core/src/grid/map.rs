use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::Point;

/// Grid cell, `x` is the column and `y` the row (row 0 at the top).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct Cell {
    pub x: i64,
    pub y: i64,
}

impl Cell {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i64, dy: i64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Cell) -> u64 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn is_adjacent_or_equal(self, other: Cell) -> bool {
        self.manhattan(other) <= 1
    }
}

impl From<[i64; 2]> for Cell {
    fn from(v: [i64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Cell> for [i64; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

impl Point for Cell {
    fn dim(&self) -> usize {
        2
    }
    fn coord(&self, axis: usize) -> i64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => panic!("cell has two axes, asked for {axis}"),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

pub(crate) const NEIGHBOR_OFFSETS: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

/// Static obstacle grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    obstacles: Vec<bool>,
    corner: usize,
}

impl GridMap {
    pub fn new(width: usize, height: usize, obstacles: Vec<bool>, corner: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::invalid(format!("map must be at least 2x2, got {width}x{height}")));
        }
        if obstacles.len() != width * height {
            return Err(Error::invalid("obstacle grid size does not match dimensions"));
        }
        if corner > width || corner > height {
            return Err(Error::invalid("clear corner larger than the map"));
        }
        let map = Self {
            width,
            height,
            obstacles,
            corner,
        };
        if map.corner_cells().any(|c| map.is_obstacle(c)) {
            return Err(Error::invalid("clear corners contain obstacles"));
        }
        Ok(map)
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height], 0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn corner(&self) -> usize {
        self.corner
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub(crate) fn index(&self, c: Cell) -> usize {
        c.y as usize * self.width + c.x as usize
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.obstacles[self.index(c)]
    }

    /// In bounds and not an obstacle.
    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.is_obstacle(c)
    }

    pub fn obstacle_count(&self) -> usize {
        self.obstacles.iter().filter(|&&o| o).count()
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Cell::new(x as i64, y as i64)))
    }

    pub fn free_neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        NEIGHBOR_OFFSETS
            .iter()
            .map(move |&(dx, dy)| c.offset(dx, dy))
            .filter(move |n| self.is_free(*n))
    }

    pub fn in_top_left_corner(&self, c: Cell) -> bool {
        self.in_bounds(c) && (c.x as usize) < self.corner && (c.y as usize) < self.corner
    }

    pub fn in_bottom_right_corner(&self, c: Cell) -> bool {
        self.in_bounds(c)
            && (c.x as usize) >= self.width - self.corner
            && (c.y as usize) >= self.height - self.corner
    }

    fn corner_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells()
            .filter(|&c| self.in_top_left_corner(c) || self.in_bottom_right_corner(c))
    }

    pub(crate) fn obstacles(&self) -> &[bool] {
        &self.obstacles
    }
}

/// Random map with clear top-left and bottom-right `corner` x `corner`
/// squares. Every other cell is an obstacle with probability `density`.
/// Maps whose corners are disconnected are redrawn, up to a retry bound.
pub fn generate_map(width: usize, height: usize, density: f64, corner: usize, seed: u64) -> Result<GridMap> {
    const ATTEMPTS: usize = 100;
    if !(0.0..1.0).contains(&density) {
        return Err(Error::invalid(format!("obstacle density {density} outside [0, 1)")));
    }
    if corner == 0 || corner > width || corner > height {
        return Err(Error::invalid(format!(
            "corner size {corner} does not fit a {width}x{height} map"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template = GridMap::new(width, height, vec![false; width * height], corner)?;
    for _ in 0..ATTEMPTS {
        let mut obstacles = vec![false; width * height];
        for c in template.cells() {
            if template.in_top_left_corner(c) || template.in_bottom_right_corner(c) {
                continue;
            }
            obstacles[template.index(c)] = rng.gen_bool(density);
        }
        let map = GridMap::new(width, height, obstacles, corner)?;
        let field = distance_field(&map, Cell::new(width as i64 - 1, height as i64 - 1))?;
        if field.get(Cell::new(0, 0)).is_some() {
            return Ok(map);
        }
    }
    Err(Error::GenerationFailed {
        attempts: ATTEMPTS,
        reason: format!("corners stay disconnected at density {density}"),
    })
}

/// Breadth-first shortest-path distances to one goal cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    width: usize,
    dist: Vec<u32>,
}

impl DistanceField {
    pub const UNREACHABLE: u32 = u32::MAX;

    /// Distance from `c` to the goal, `None` when out of bounds, blocked or
    /// disconnected.
    pub fn get(&self, c: Cell) -> Option<u32> {
        if c.x < 0 || c.y < 0 || c.x as usize >= self.width {
            return None;
        }
        let idx = c.y as usize * self.width + c.x as usize;
        match self.dist.get(idx) {
            Some(&d) if d != Self::UNREACHABLE => Some(d),
            _ => None,
        }
    }

    pub fn raw(&self) -> &[u32] {
        &self.dist
    }
}

pub fn distance_field(map: &GridMap, goal: Cell) -> Result<DistanceField> {
    if !map.in_bounds(goal) {
        return Err(Error::invalid(format!("goal {goal} out of bounds")));
    }
    if map.is_obstacle(goal) {
        return Err(Error::invalid(format!("goal {goal} is an obstacle")));
    }
    let mut dist = vec![DistanceField::UNREACHABLE; map.width * map.height];
    let mut queue = VecDeque::new();
    dist[map.index(goal)] = 0;
    queue.push_back(goal);
    while let Some(c) = queue.pop_front() {
        let d = dist[map.index(c)];
        for n in map.free_neighbors(c) {
            let i = map.index(n);
            if dist[i] == DistanceField::UNREACHABLE {
                dist[i] = d + 1;
                queue.push_back(n);
            }
        }
    }
    Ok(DistanceField {
        width: map.width,
        dist,
    })
}
