//! Solved value functions with intervention labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::grid::{GridSlice, SpaceTimeGrid};

/// Which player, if any, intervenes at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Region {
    #[default]
    #[serde(rename = "CONT")]
    Cont,
    /// Player I's lower clamp set the value.
    #[serde(rename = "I_INT")]
    PlayerI,
    /// Player II's upper clamp set the value.
    #[serde(rename = "II_INT")]
    PlayerII,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Cont, Region::PlayerI, Region::PlayerII];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Cont => "CONT",
            Region::PlayerI => "I_INT",
            Region::PlayerII => "II_INT",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Region::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown region label `{s}`"))
    }
}

/// Value function on a space-time grid. Level `k` lives at `grid.time(k)`;
/// `actions` index into the impulse set of the player named by `regions`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub grid: SpaceTimeGrid,
    pub values: Vec<Vec<f64>>,
    pub regions: Vec<Vec<Region>>,
    pub actions: Vec<Vec<Option<usize>>>,
    /// Obstacle fixed-point passes spent per level.
    pub passes: Vec<usize>,
}

impl ValueField {
    /// Field with every node in the continuation region.
    pub fn unlabeled(grid: SpaceTimeGrid, values: Vec<Vec<f64>>) -> Self {
        let levels = values.len();
        let n = grid.space.len();
        Self {
            grid,
            values,
            regions: vec![vec![Region::Cont; n]; levels],
            actions: vec![vec![None; n]; levels],
            passes: vec![0; levels],
        }
    }

    pub fn levels(&self) -> usize {
        self.values.len()
    }

    pub fn slice(&self, level: usize) -> GridSlice {
        GridSlice::new(self.grid.space.clone(), self.grid.time(level), self.values[level].clone())
    }

    /// Level whose time is closest to `t`.
    pub fn level_of(&self, t: f64) -> usize {
        let k = (t / self.grid.dt()).round();
        k.clamp(0.0, self.grid.steps as f64) as usize
    }

    /// Value at the nearest time level, interpolated in space.
    pub fn value_at(&self, t: f64, x: &[f64]) -> Option<f64> {
        self.grid.space.interpolate(&self.values[self.level_of(t)], x)
    }

    /// Count of nodes per region over all levels, ordered as `Region::ALL`.
    pub fn region_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for r in self.regions.iter().flatten() {
            counts[r.index()] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;

    #[test]
    fn labels_round_trip() {
        for r in Region::ALL {
            assert_eq!(r.as_str().parse::<Region>().unwrap(), r);
        }
        assert!("I".parse::<Region>().is_err());
    }

    #[test]
    fn probe_uses_nearest_level() {
        let space = SpatialGrid::from_box(&[[0.0, 1.0]], 0.5).unwrap();
        let grid = SpaceTimeGrid::new(space, 1.0, 2).unwrap();
        let f = ValueField::unlabeled(grid, vec![vec![0.0; 3], vec![1.0; 3], vec![2.0, 2.0, 4.0]]);
        assert_eq!(f.value_at(0.9, &[0.75]), Some(3.0));
        assert_eq!(f.value_at(0.3, &[0.0]), Some(1.0));
        assert_eq!(f.region_counts(), [9, 0, 0]);
    }
}
