//! Mean-field game solver on a 1-D grid.
//!
//! A backward HJB sweep produces the cost-to-go `psi(z, t)` and, node by
//! node, the closed-form optimal velocity `v*(z, t)`. A forward FPK sweep
//! transports the fleet density under `v* + A`. A damped Picard loop
//! alternates the two until the density stops changing.
//!
//! Matrices are indexed `[time, node]` with `n_t + 1` rows.

mod control;
mod fpk;
mod hjb;
pub mod oracle;
mod picard;
mod rate;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use control::{
    hamiltonian_bracket, optimal_velocity, optimal_velocity_from_moments, KernelTable,
};
pub use fpk::{fpk_forward, gaussian_density, FpkOutput, MASS_DRIFT_TOL, NEGATIVITY_TOL};
pub use hjb::{hjb_backward, HjbSweep};
pub use picard::{picard_solve, MfgProblem, MfgSolution, PicardSettings};
pub use rate::{rate_field, Hotspot};

use crate::cost::FieldSlice;
use crate::grid::Grid;

/// Cost-to-go `psi(z, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Array2<f64>,
}

impl ValueFunction {
    /// Spatial gradient of `psi` at time `t_k` by central differences, zero
    /// at the Neumann boundaries.
    pub fn gradient(&self, grid: &Grid, k: usize) -> Vec<f64> {
        central_gradient(
            grid,
            self.values.row(k).as_slice().expect("standard layout"),
        )
    }

    /// Gradient that enters the optimal control on `[t_k, t_k+1)`: the one
    /// of the later time level, or zero at the horizon.
    pub fn control_gradient(&self, grid: &Grid, k: usize) -> Vec<f64> {
        if k >= grid.n_t {
            vec![0.0; grid.n_z]
        } else {
            self.gradient(grid, k + 1)
        }
    }
}

pub(crate) fn central_gradient(grid: &Grid, psi: &[f64]) -> Vec<f64> {
    let n = grid.n_z;
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (psi[i + 1] - psi[i - 1]) / (2.0 * grid.dz);
    }
    out
}

/// Fleet density `m(z, t)` and optimal velocity field `v*(z, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanField {
    pub density: Array2<f64>,
    pub velocity: Array2<f64>,
}

impl MeanField {
    pub fn slice<'a>(&'a self, grid: &'a Grid, k: usize) -> FieldSlice<'a> {
        FieldSlice::new(
            grid,
            self.density.row(k).to_slice().expect("standard layout"),
            self.velocity.row(k).to_slice().expect("standard layout"),
        )
    }

    /// Largest `|int m(., t) dz - 1|` over all time rows.
    pub fn max_mass_error(&self, grid: &Grid) -> f64 {
        self.density
            .rows()
            .into_iter()
            .map(|row| (grid.integrate(row.as_slice().expect("standard layout")) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_density(&self) -> f64 {
        self.density.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub picard_iterations: usize,
    /// Sup-norm change of the density in the last iteration.
    pub final_residual: f64,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub tolerance: f64,
    pub damping: f64,
    pub v_max: f64,
    /// Number of FPK steps (last sweep) whose mass drift triggered renormalization.
    pub renormalizations: usize,
    /// Largest mass error of the returned density before any renormalization.
    pub max_mass_error: f64,
    pub min_density: f64,
}
