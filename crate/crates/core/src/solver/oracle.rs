//! Independent checks on a solved mean field.
//!
//! The Hamiltonian check recomputes the bracket by direct quadrature on a
//! dense velocity lattice and compares its argmin with the closed-form
//! control. The FPK checks compare transported moments with the exact
//! drift and diffusion laws.

use ndarray::Array2;
use serde::Serialize;

use super::control::optimal_velocity;
use super::fpk::{fpk_forward, gaussian_density};
use super::{MfgProblem, MfgSolution};
use crate::cost::{kernel, RATE_FLOOR};
use crate::dynamics::WindModel;
use crate::error::Result;
use crate::grid::Grid;

/// Lattice size of the brute-force velocity search.
pub const LATTICE_POINTS: usize = 2001;

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HamiltonianCheck {
    pub nodes: usize,
    pub matched: usize,
    pub lattice_step: f64,
    pub worst_gap: f64,
}

impl HamiltonianCheck {
    pub fn fraction(&self) -> f64 {
        self.matched as f64 / self.nodes as f64
    }
}

/// Compares the closed-form control with the lattice argmin of
/// `w_e E(v) + w_f F(v) + (v + A) dpsi/dz` at every `(t, z)` node.
pub fn hamiltonian_oracle(
    problem: &MfgProblem,
    solution: &MfgSolution,
    lattice_points: usize,
) -> HamiltonianCheck {
    let grid = &problem.grid;
    let w = &problem.weights;
    let v_max = problem.v_max;
    let step = 2.0 * v_max / (lattice_points - 1) as f64;
    let lattice: Vec<f64> = (0..lattice_points)
        .map(|l| -v_max + l as f64 * step)
        .collect();
    let n = grid.n_z;

    let mut matched = 0;
    let mut worst_gap: f64 = 0.0;
    let mut quad = vec![0.0; n];
    for k in 0..=grid.n_t {
        let grad = solution.value.control_gradient(grid, k);
        let slice = solution.field.slice(grid, k);
        for (i, &grad_i) in grad.iter().enumerate() {
            let z = grid.z(i);
            let rate = problem.rate[i].max(RATE_FLOOR);
            let closed = optimal_velocity(grad_i, z, &slice, rate, w, v_max);

            for (j, q) in quad.iter_mut().enumerate() {
                let kern = kernel((grid.z(j) - z).abs(), w.gamma, w.beta).expect("validated gamma");
                *q = grid.weight(j) * slice.density[j] * kern;
            }
            let bracket = |v: f64| {
                let energy = (0.5 * w.mass * v * v + problem.tx_power_w + w.fixed_power) / rate;
                let flock: f64 = quad
                    .iter()
                    .zip(slice.velocity)
                    .map(|(q, vj)| q * (vj - v) * (vj - v))
                    .sum();
                w.w_energy * energy + w.w_flock * flock + (v + problem.wind.mean_velocity) * grad_i
            };
            let mut best = (f64::INFINITY, 0.0);
            for &v in &lattice {
                let h = bracket(v);
                if h < best.0 {
                    best = (h, v);
                }
            }
            let gap = (best.1 - closed).abs();
            worst_gap = worst_gap.max(gap);
            if gap <= step * (1.0 + 1e-9) {
                matched += 1;
            }
        }
    }
    HamiltonianCheck {
        nodes: (grid.n_t + 1) * n,
        matched,
        lattice_step: step,
        worst_gap,
    }
}

fn first_two_moments(grid: &Grid, m: &[f64]) -> (f64, f64) {
    let mean: f64 = (0..grid.n_z)
        .map(|i| grid.weight(i) * m[i] * grid.z(i))
        .sum();
    let var: f64 = (0..grid.n_z)
        .map(|i| grid.weight(i) * m[i] * (grid.z(i) - mean).powi(2))
        .sum();
    (mean, var)
}

/// Constant drift `A` without noise: the density mean must follow
/// `z0 + A t` within one cell until the bulk nears a wall.
pub fn fpk_translation_oracle(
    grid: &Grid,
    wind: &WindModel,
    mean: f64,
    std: f64,
) -> Result<OracleCheck> {
    let m0 = gaussian_density(grid, mean, std);
    let still = WindModel {
        mean_velocity: wind.mean_velocity,
        volatility: 0.0,
    };
    let v = Array2::zeros((grid.n_t + 1, grid.n_z));
    let out = fpk_forward(&v, &still, grid, &m0)?;
    let (mean0, _) = first_two_moments(grid, &m0);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for k in 0..=grid.n_t {
        let expected = mean0 + wind.mean_velocity * grid.t(k);
        if expected - 4.0 * std < grid.z_min || expected + 4.0 * std > grid.z_max {
            break;
        }
        let (m_k, _) = first_two_moments(
            grid,
            out.density.row(k).as_slice().expect("standard layout"),
        );
        worst = worst.max((m_k - expected).abs());
        checked += 1;
    }
    Ok(OracleCheck {
        name: "fpk_translation".into(),
        passed: checked > 0 && worst <= grid.dz,
        detail: format!(
            "max |mean - (z0 + A t)| = {worst:.3e} m over {checked} steps (bound dz = {:.3} m)",
            grid.dz
        ),
    })
}

/// Drift cancelled by the control (`v = -A`): the density variance must
/// grow as `eta^2 t` within 5%.
pub fn fpk_diffusion_oracle(
    grid: &Grid,
    wind: &WindModel,
    mean: f64,
    std: f64,
) -> Result<OracleCheck> {
    let m0 = gaussian_density(grid, mean, std);
    let v = Array2::from_elem((grid.n_t + 1, grid.n_z), -wind.mean_velocity);
    let out = fpk_forward(&v, wind, grid, &m0)?;
    let (_, var0) = first_two_moments(grid, &m0);
    let (_, var_t) = first_two_moments(
        grid,
        out.density
            .row(grid.n_t)
            .as_slice()
            .expect("standard layout"),
    );
    let expected = wind.volatility * wind.volatility * grid.t_horizon;
    let growth = var_t - var0;
    let rel = if expected > 0.0 {
        (growth - expected).abs() / expected
    } else {
        growth.abs()
    };
    Ok(OracleCheck {
        name: "fpk_diffusion".into(),
        passed: rel <= 0.05,
        detail: format!(
            "variance growth {growth:.6e} vs eta^2 T = {expected:.6e} (rel err {rel:.3e})"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostWeights;
    use crate::solver::{picard_solve, MfgProblem, PicardSettings};

    #[test]
    fn closed_form_control_matches_lattice_on_active_field() {
        let grid = Grid::new(0.0, 300.0, 48, 20.0, 80).unwrap();
        let rate = (0..grid.n_z)
            .map(|i| 3.5e6 * (1.0 - ((grid.z(i) - 150.0) / 300.0).powi(2)))
            .collect();
        let problem = MfgProblem {
            initial_density: gaussian_density(&grid, 210.0, 12.0),
            weights: CostWeights {
                w_energy: 1e6,
                w_flock: 0.05,
                gamma: 1.0,
                beta: 0.5,
                mass: 1e-2,
                fixed_power: 0.0,
            },
            wind: WindModel {
                mean_velocity: 0.0,
                volatility: 0.5,
            },
            tx_power_w: 0.2,
            rate,
            terminal: vec![0.0; grid.n_z],
            v_max: 30.0,
            picard: PicardSettings::default(),
            grid,
        };
        let solution = picard_solve(&problem).unwrap();
        let peak = solution
            .field
            .velocity
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(peak > 0.5, "control is trivially small: {peak}");
        let check = hamiltonian_oracle(&problem, &solution, LATTICE_POINTS);
        assert!(check.fraction() >= 0.95, "{check:?}");
    }

    #[test]
    fn translation_and_diffusion_on_desk_grid() {
        let grid = Grid::new(0.0, 300.0, 128, 20.0, 200).unwrap();
        let wind = WindModel {
            mean_velocity: -3.0,
            volatility: 0.1,
        };
        let t = fpk_translation_oracle(&grid, &wind, 210.0, 30f64.sqrt()).unwrap();
        assert!(t.passed, "{}", t.detail);
        let d = fpk_diffusion_oracle(&grid, &wind, 210.0, 30f64.sqrt()).unwrap();
        assert!(d.passed, "{}", d.detail);
    }
}
