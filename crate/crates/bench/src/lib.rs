//! Shared fixtures for the benchmarks.

use she_lab_core::correlation::CorrelationModel;
use she_lab_core::grid::LatticeGrid;
use she_lab_core::solver::{RhoModel, Scheme, SimParams};

/// One-dimensional PAM on `[-L, L)` with `n` points, `Δt = 1e-3`.
pub fn pam(model: CorrelationModel, n: usize, t_end: f64) -> SimParams {
    let grid = LatticeGrid::new(model.dim(), 5.12, n).expect("power-of-two grid");
    SimParams::new(grid, model, RhoModel::Linear { lambda: 1.0 }, Scheme::ExpEuler, 1e-3, t_end, 1)
}
