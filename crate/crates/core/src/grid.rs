//! Periodic lattice carrier and lattice fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic lattice on the torus `[-L, L)^d` with `N` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeGrid {
    dim: usize,
    half_width: f64,
    points: usize,
}

impl LatticeGrid {
    pub fn new(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        let mut errs = Vec::new();
        if !(1..=2).contains(&dim) {
            errs.push(format!("grid.d must be 1 or 2, got {dim}"));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            errs.push(format!("grid.L must be positive, got {half_width}"));
        }
        if points < 8 || !points.is_power_of_two() {
            errs.push(format!("grid.N must be a power of two >= 8, got {points}"));
        }
        if errs.is_empty() {
            Ok(Self { dim, half_width, points })
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// `Δx^d`, the lattice volume element.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn cells(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    /// Coordinate of node `j` along one axis.
    pub fn coord(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn axis(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.coord(j)).collect()
    }

    /// Multi-index of a flat (row-major) index.
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.points, idx % self.points],
        }
    }

    pub fn flatten(&self, ij: [usize; 2]) -> usize {
        match self.dim {
            1 => ij[0],
            _ => ij[0] * self.points + ij[1],
        }
    }

    /// Spatial position of a flat index.
    pub fn position(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.unflatten(idx);
        match self.dim {
            1 => [self.coord(i), 0.0],
            _ => [self.coord(i), self.coord(j)],
        }
    }

    /// Signed minimum-image displacement of a lattice offset along one axis.
    pub fn wrapped_offset(&self, k: usize) -> f64 {
        let n = self.points;
        let k = k % n;
        let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        signed * self.spacing()
    }

    /// Nearest node along one axis for coordinate `x`, ties broken toward +∞.
    pub fn nearest_node(&self, x: f64) -> Option<usize> {
        if !(x > -self.half_width && x < self.half_width) {
            return None;
        }
        let r = (x + self.half_width) / self.spacing();
        let j = (r + 0.5).floor() as usize;
        Some(j % self.points)
    }

    /// Finite-grid equality check used before combining fields.
    pub fn ensure_same(&self, other: &LatticeGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Shape(format!("grid mismatch: {self:?} vs {other:?}")))
        }
    }
}

/// Solution values on the lattice at one time index, for one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub grid: LatticeGrid,
    pub time_index: usize,
    pub replica: u64,
    pub values: Vec<f64>,
}

impl FieldState {
    pub fn new(grid: LatticeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::Shape(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.cells()
            )));
        }
        Ok(Self { grid, time_index: 0, replica: 0, values })
    }

    pub fn constant(grid: LatticeGrid, c: f64) -> Self {
        Self { grid, time_index: 0, replica: 0, values: vec![c; grid.cells()] }
    }

    pub fn from_fn(grid: LatticeGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.cells()).map(|i| f(grid.position(i))).collect();
        Self { grid, time_index: 0, replica: 0, values }
    }

    /// `Σ u_j Δx^d`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(LatticeGrid::new(1, 1.0, 100).is_err());
        assert!(LatticeGrid::new(3, 1.0, 64).is_err());
        assert!(LatticeGrid::new(1, 0.0, 64).is_err());
        assert!(LatticeGrid::new(1, 1.0, 4).is_err());
        let err = LatticeGrid::new(1, 1.0, 100).unwrap_err().to_string();
        assert!(err.contains("grid.N"), "{err}");
    }

    #[test]
    fn nodes_include_origin() {
        let g = LatticeGrid::new(1, 2.56, 512).unwrap();
        assert!((g.spacing() - 0.01).abs() < 1e-15);
        assert_eq!(g.coord(256), 0.0);
        assert_eq!(g.nearest_node(0.0), Some(256));
        // tie goes toward +infinity
        assert_eq!(g.nearest_node(0.005), Some(257));
        assert_eq!(g.nearest_node(0.0049), Some(256));
        assert_eq!(g.nearest_node(3.0), None);
    }

    #[test]
    fn flat_index_roundtrip() {
        let g = LatticeGrid::new(2, 1.0, 8).unwrap();
        for idx in 0..g.cells() {
            assert_eq!(g.flatten(g.unflatten(idx)), idx);
        }
        assert_eq!(g.cells(), 64);
    }
}
