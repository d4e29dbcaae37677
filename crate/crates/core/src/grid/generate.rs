use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::Instance;
use super::map::{generate_map, Cell, GridMap};
use crate::error::{Error, Result};

/// Parameters of a random instance: agents start in the top-left clear
/// corner and head to the same formation in the bottom-right corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub width: usize,
    pub height: usize,
    pub density: f64,
    pub corner: usize,
    pub agents: usize,
    /// Side of the square box the desired formation is sampled in.
    pub formation_size: usize,
}

impl InstanceParams {
    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(Error::invalid("need at least one agent"));
        }
        if self.formation_size == 0 || self.formation_size > self.corner {
            return Err(Error::invalid(format!(
                "formation box {} must fit in the clear corner {}",
                self.formation_size, self.corner
            )));
        }
        if self.agents > self.formation_size * self.formation_size {
            return Err(Error::invalid(format!(
                "{} agents do not fit a {}x{} formation box",
                self.agents, self.formation_size, self.formation_size
            )));
        }
        if 2 * self.corner > self.width && 2 * self.corner > self.height {
            return Err(Error::invalid("clear corners overlap"));
        }
        Ok(())
    }
}

/// `agents` distinct offsets inside a `size` x `size` box.
pub fn sample_formation(size: usize, agents: usize, seed: u64) -> Result<Vec<(i64, i64)>> {
    if agents > size * size {
        return Err(Error::invalid("formation box too small"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, size * size, agents)
        .into_iter()
        .map(|k| ((k % size) as i64, (k / size) as i64))
        .collect())
}

/// Places a formation in both corners of `map`.
pub fn place_formation(map: Arc<GridMap>, offsets: &[(i64, i64)], formation_size: usize) -> Result<Instance> {
    let gx = (map.width() - formation_size) as i64;
    let gy = (map.height() - formation_size) as i64;
    let starts = offsets.iter().map(|&(x, y)| Cell::new(x, y)).collect();
    let goals = offsets.iter().map(|&(x, y)| Cell::new(gx + x, gy + y)).collect();
    Instance::new(map, starts, goals)
}

pub fn generate_instance(params: &InstanceParams, map_seed: u64, formation_seed: u64) -> Result<Instance> {
    params.validate()?;
    let map = generate_map(params.width, params.height, params.density, params.corner, map_seed)?;
    let offsets = sample_formation(params.formation_size, params.agents, formation_seed)?;
    place_formation(Arc::new(map), &offsets, params.formation_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> InstanceParams {
        InstanceParams {
            width: 8,
            height: 8,
            density: 0.1,
            corner: 3,
            agents: 3,
            formation_size: 3,
        }
    }

    #[test]
    fn generated_instance_uses_corners() {
        for seed in 0..10 {
            let inst = generate_instance(&params(), seed, seed + 100).unwrap();
            for (s, g) in inst.starts.iter().zip(&inst.goals) {
                assert!(inst.map.in_top_left_corner(*s));
                assert!(inst.map.in_bottom_right_corner(*g));
                // Start formation mirrors the goal formation.
                assert_eq!((g.x - s.x, g.y - s.y), (5, 5));
            }
        }
    }

    #[test]
    fn rejects_impossible_parameters() {
        let mut p = params();
        p.agents = 10;
        assert!(generate_instance(&p, 0, 0).is_err());
        let mut p = params();
        p.formation_size = 4;
        assert!(generate_instance(&p, 0, 0).is_err());
        let mut p = params();
        p.corner = 5;
        p.formation_size = 5;
        assert!(generate_instance(&p, 0, 0).is_err());
    }
}
