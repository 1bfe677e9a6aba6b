//! Grid tile coding and the sparse Q-table it indexes.

use super::AgentError;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Overlapping uniform grids. Tiling `t` is shifted by `t / num_tilings` of a
/// tile width in every dimension, so each tiling needs one extra cell per
/// dimension to cover the shifted range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileCoder {
    num_tilings: usize,
    tiles_per_dim: Vec<usize>,
    bounds: Vec<(f64, f64)>,
}

impl TileCoder {
    pub fn new(
        num_tilings: usize,
        tiles_per_dim: Vec<usize>,
        bounds: Vec<(f64, f64)>,
    ) -> Result<Self, AgentError> {
        if num_tilings == 0 || tiles_per_dim.is_empty() || tiles_per_dim.contains(&0) {
            return Err(AgentError::Config(
                "tile coder needs positive tilings and tile counts".into(),
            ));
        }
        if tiles_per_dim.len() != bounds.len() {
            return Err(AgentError::Config(
                "one (low, high) bound per tiled dimension".into(),
            ));
        }
        if bounds
            .iter()
            .any(|&(lo, hi)| !(hi > lo) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(AgentError::Config("tile bounds need low < high".into()));
        }
        Ok(Self {
            num_tilings,
            tiles_per_dim,
            bounds,
        })
    }

    pub fn num_tilings(&self) -> usize {
        self.num_tilings
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn tile_width(&self, dim: usize) -> f64 {
        let (lo, hi) = self.bounds[dim];
        (hi - lo) / self.tiles_per_dim[dim] as f64
    }

    fn cells_per_tiling(&self) -> usize {
        self.tiles_per_dim.iter().map(|n| n + 1).product()
    }

    /// Upper bound (exclusive) on tile ids.
    pub fn num_tiles(&self) -> usize {
        self.num_tilings * self.cells_per_tiling()
    }

    /// Active tile ids, one per tiling, in tiling order.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<usize>, AgentError> {
        if x.len() != self.dims() {
            return Err(AgentError::Shape {
                expected: self.dims(),
                got: x.len(),
            });
        }
        let cells = self.cells_per_tiling();
        let ids = (0..self.num_tilings)
            .map(|t| {
                let frac = t as f64 / self.num_tilings as f64;
                let mut id = 0usize;
                let mut stride = 1usize;
                for (d, &xi) in x.iter().enumerate() {
                    let (lo, hi) = self.bounds[d];
                    let width = self.tile_width(d);
                    let v = if xi.is_nan() { lo } else { xi.clamp(lo, hi) };
                    let idx = (((v - lo) + frac * width) / width).floor() as usize;
                    id += idx.min(self.tiles_per_dim[d]) * stride;
                    stride *= self.tiles_per_dim[d] + 1;
                }
                t * cells + id
            })
            .collect();
        Ok(ids)
    }

    /// Per-tiling grid coordinates of a tile id (for inspection and tests).
    pub fn decompose(&self, id: usize) -> (usize, Vec<usize>) {
        let cells = self.cells_per_tiling();
        let mut rest = id % cells;
        let coords = self
            .tiles_per_dim
            .iter()
            .map(|n| {
                let c = rest % (n + 1);
                rest /= n + 1;
                c
            })
            .collect();
        (id / cells, coords)
    }
}

/// Sparse linear action values over active tiles. Missing entries read as 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QTable {
    entries: HashMap<(usize, usize), f64>,
    pub learning_rate: f64,
    pub discount: f64,
    pub num_actions: usize,
}

impl QTable {
    pub fn new(num_actions: usize, learning_rate: f64, discount: f64) -> Result<Self, AgentError> {
        if num_actions == 0 {
            return Err(AgentError::Config("need at least one action".into()));
        }
        if !(learning_rate > 0.0) {
            return Err(AgentError::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(AgentError::Config("discount must be in [0, 1)".into()));
        }
        Ok(Self {
            entries: HashMap::new(),
            learning_rate,
            discount,
            num_actions,
        })
    }

    pub fn entry(&self, tile: usize, action: usize) -> f64 {
        self.entries.get(&(tile, action)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mean of the active tiles' entries.
    pub fn value(&self, tiles: &[usize], action: usize) -> f64 {
        if tiles.is_empty() {
            return 0.0;
        }
        tiles.iter().map(|&t| self.entry(t, action)).sum::<f64>() / tiles.len() as f64
    }

    pub fn values(&self, tiles: &[usize]) -> Vec<f64> {
        (0..self.num_actions)
            .map(|a| self.value(tiles, a))
            .collect()
    }

    /// Greedy action (lowest index on ties) and its value.
    pub fn best(&self, tiles: &[usize]) -> (usize, f64) {
        argmax(&self.values(tiles))
    }

    /// One Q-learning backup; returns the TD error.
    pub fn update(
        &mut self,
        s_tiles: &[usize],
        action: usize,
        reward: f64,
        s_next_tiles: &[usize],
        done: bool,
    ) -> f64 {
        let bootstrap = if done {
            0.0
        } else {
            self.discount * self.best(s_next_tiles).1
        };
        let delta = reward + bootstrap - self.value(s_tiles, action);
        if delta != 0.0 && !s_tiles.is_empty() {
            let step = self.learning_rate / s_tiles.len() as f64 * delta;
            for &t in s_tiles {
                *self.entries.entry((t, action)).or_insert(0.0) += step;
            }
        }
        delta
    }

    /// Entries sorted by key, for stable serialization.
    pub fn sorted_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut v: Vec<_> = self.entries.iter().map(|(&(t, a), &q)| (t, a, q)).collect();
        v.sort_by_key(|&(t, a, _)| (t, a));
        v
    }

    pub fn insert(&mut self, tile: usize, action: usize, value: f64) {
        self.entries.insert((tile, action), value);
    }
}

/// Index of the maximum, first index on ties. Panics on an empty slice.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}
