//! Numerical laboratory for the stochastic heat equation `∂_t u = ½Δu + ρ(u)Ṁ`
//! driven by Gaussian noise that is white in time and correlated in space.

pub mod config;
pub mod correlation;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod moments;
pub mod initial;
pub mod kernels;
pub mod noise;
pub mod persist;
pub mod quad;
pub mod solver;
pub mod special;
pub mod spectral;
pub mod stats;
pub mod volterra;

pub use error::{Error, Result};
pub use grid::{FieldState, LatticeGrid};
pub use kernels::{g_weight, heat_kernel, r_epsilon_density, semigroup_apply, HeatSemigroup, KernelQuery};
pub use quad::{Estimate, Tolerance};
