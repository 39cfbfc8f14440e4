//! Grid functions: space-time fields and state snapshots.

use crate::grid::Grid;
use std::ops::{Index, IndexMut};

/// A scalar function on the space-time grid, stored level by level.
///
/// `values[n * nx + i]` is the value at time level `n` and interior node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &Grid) -> Self {
        SpaceTimeField {
            grid: *grid,
            values: vec![0.0; (grid.nt() + 1) * grid.nx()],
        }
    }

    /// Samples `f(x, t)` at every node.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut field = Self::zeros(grid);
        for n in 0..=grid.nt() {
            let t = grid.t(n);
            for (i, v) in field.level_mut(n).iter_mut().enumerate() {
                *v = f(grid.x(i), t);
            }
        }
        field
    }

    /// Constant field.
    pub fn constant(grid: &Grid, c: f64) -> Self {
        SpaceTimeField {
            grid: *grid,
            values: vec![c; (grid.nt() + 1) * grid.nx()],
        }
    }

    /// Wraps raw level-major values; `None` when the length does not match.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Option<Self> {
        (values.len() == (grid.nt() + 1) * grid.nx()).then_some(SpaceTimeField { grid: *grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn level(&self, n: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.values[n * nx..(n + 1) * nx]
    }

    pub fn level_mut(&mut self, n: usize) -> &mut [f64] {
        let nx = self.grid.nx();
        &mut self.values[n * nx..(n + 1) * nx]
    }

    pub fn levels(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.grid.nx())
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SpaceTimeField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &SpaceTimeField) -> Self {
        let mut out = self.clone();
        out.axpy(s, other);
        out
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &SpaceTimeField) {
        debug_assert!(self.conforms(other));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// Zeroes every node outside `omega`.
    pub fn restrict_to_omega(&mut self) {
        let r = self.grid.omega_nodes();
        let nx = self.grid.nx();
        for row in self.values.chunks_exact_mut(nx) {
            row[..r.start].iter_mut().for_each(|v| *v = 0.0);
            row[r.end..].iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// True when every node outside `omega` is exactly zero.
    pub fn supported_in_omega(&self) -> bool {
        let r = self.grid.omega_nodes();
        self.levels()
            .all(|row| row[..r.start].iter().chain(&row[r.end..]).all(|&v| v == 0.0))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn conforms(&self, other: &SpaceTimeField) -> bool {
        self.grid.same_shape(&other.grid)
    }
}

impl Index<(usize, usize)> for SpaceTimeField {
    type Output = f64;

    fn index(&self, (n, i): (usize, usize)) -> &f64 {
        &self.values[n * self.grid.nx() + i]
    }
}

impl IndexMut<(usize, usize)> for SpaceTimeField {
    fn index_mut(&mut self, (n, i): (usize, usize)) -> &mut f64 {
        let nx = self.grid.nx();
        &mut self.values[n * nx + i]
    }
}

/// A snapshot `(position, velocity)` in `H^1_0 x L^2`, interior nodes only.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
}

impl StatePair {
    pub fn new(pos: Vec<f64>, vel: Vec<f64>) -> Self {
        StatePair { pos, vel }
    }

    pub fn zeros(grid: &Grid) -> Self {
        StatePair {
            pos: vec![0.0; grid.nx()],
            vel: vec![0.0; grid.nx()],
        }
    }

    /// Samples position and velocity profiles at the interior nodes.
    pub fn from_fns(grid: &Grid, pos: impl Fn(f64) -> f64, vel: impl Fn(f64) -> f64) -> Self {
        let xs = grid.xs();
        StatePair {
            pos: xs.iter().map(|&x| pos(x)).collect(),
            vel: xs.iter().map(|&x| vel(x)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn conforms(&self, grid: &Grid) -> bool {
        self.pos.len() == grid.nx() && self.vel.len() == grid.nx()
    }

    pub fn is_zero(&self) -> bool {
        self.pos.iter().chain(&self.vel).all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().chain(&self.vel).all(|v| v.is_finite())
    }

    /// `self - other`.
    pub fn sub(&self, other: &StatePair) -> StatePair {
        StatePair {
            pos: self.pos.iter().zip(&other.pos).map(|(a, b)| a - b).collect(),
            vel: self.vel.iter().zip(&other.vel).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> StatePair {
        StatePair {
            pos: self.pos.iter().map(|v| s * v).collect(),
            vel: self.vel.iter().map(|v| s * v).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_indexing() {
        let g = Grid::new(4, 0.5, 0.2, 0.8).unwrap();
        let f = SpaceTimeField::from_fn(&g, |x, t| x + 10.0 * t);
        assert_eq!(f.values().len(), (g.nt() + 1) * 4);
        assert_eq!(f[(0, 0)], g.x(0));
        assert_eq!(f.level(2)[3], g.x(3) + 10.0 * g.t(2));
    }

    #[test]
    fn omega_restriction() {
        let g = Grid::new(20, 1.0, 0.3, 0.6).unwrap();
        let mut f = SpaceTimeField::constant(&g, 1.0);
        assert!(!f.supported_in_omega());
        f.restrict_to_omega();
        assert!(f.supported_in_omega());
        let r = g.omega_nodes();
        assert_eq!(f.level(0).iter().filter(|&&v| v == 1.0).count(), r.len());
    }

    #[test]
    fn axpy_combines() {
        let g = Grid::new(5, 0.3, 0.2, 0.8).unwrap();
        let a = SpaceTimeField::constant(&g, 2.0);
        let b = SpaceTimeField::constant(&g, 3.0);
        let c = a.add_scaled(-2.0, &b);
        assert!(c.values().iter().all(|&v| v == -4.0));
    }
}
