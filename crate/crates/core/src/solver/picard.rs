use log::{debug, info};
use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::fpk::fpk_forward;
use super::hjb::hjb_backward;
use super::{MeanField, SolveReport, ValueFunction};
use crate::cost::CostWeights;
use crate::dynamics::WindModel;
use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardSettings {
    /// Relaxation `delta` in `m <- (1 - delta) m_old + delta m_new`.
    pub damping: f64,
    /// Sup-norm density change that counts as converged.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PicardSettings {
    fn default() -> Self {
        PicardSettings {
            damping: 0.5,
            tol: 1e-4,
            max_iters: 200,
        }
    }
}

/// Everything one mean-field solve needs, already resolved onto the grid.
#[derive(Debug, Clone)]
pub struct MfgProblem {
    pub grid: Grid,
    pub weights: CostWeights,
    pub wind: WindModel,
    pub tx_power_w: f64,
    /// Expected downlink rate per node (bits/s).
    pub rate: Vec<f64>,
    pub initial_density: Vec<f64>,
    pub terminal: Vec<f64>,
    pub v_max: f64,
    pub picard: PicardSettings,
}

impl MfgProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n_z;
        if self.rate.len() != n || self.initial_density.len() != n || self.terminal.len() != n {
            return Err(Error::Domain(
                "problem vectors do not match the grid".into(),
            ));
        }
        if !(self.v_max > 0.0) {
            return Err(Error::config("solver.v_max", "must be > 0"));
        }
        let p = &self.picard;
        if !(p.damping > 0.0 && p.damping <= 1.0) {
            return Err(Error::config(
                "solver.damping",
                "must satisfy 0 < damping <= 1",
            ));
        }
        if !(p.tol > 0.0) {
            return Err(Error::config("solver.tol", "must be > 0"));
        }
        if p.max_iters == 0 {
            return Err(Error::config("solver.max_iters", "must be >= 1"));
        }
        self.weights.validate()?;
        self.wind.validate()
    }
}

#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub field: MeanField,
    pub value: ValueFunction,
    pub report: SolveReport,
}

fn sup_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a)
        .and(b)
        .fold(0.0, |acc: f64, x, y| acc.max((x - y).abs()))
}

/// Damped Picard iteration between the backward HJB and forward FPK sweeps.
///
/// Starts from the wind-only density with a zero velocity field. Each pass
/// solves HJB against the current `(m, v)`, replaces `v` with the new
/// optimal field, transports the initial density under it, and relaxes `m`.
/// The returned field pairs the last velocity field with the density it
/// transports, so `(m, v*)` solve the FPK exactly. Non-convergence is
/// reported, never raised.
pub fn picard_solve(problem: &MfgProblem) -> Result<MfgSolution> {
    problem.validate()?;
    let grid = &problem.grid;
    let shape = (grid.n_t + 1, grid.n_z);

    let mut velocity = Array2::<f64>::zeros(shape);
    let mut fpk = fpk_forward(&velocity, &problem.wind, grid, &problem.initial_density)?;
    let mut density = fpk.density.clone();
    let mut history = Vec::new();
    let mut value = ValueFunction {
        values: Array2::zeros(shape),
    };
    let mut converged = false;

    for iter in 1..=problem.picard.max_iters {
        let field = MeanField {
            density: density.clone(),
            velocity: velocity.clone(),
        };
        let sweep = hjb_backward(
            &field,
            &problem.rate,
            &problem.weights,
            &problem.wind,
            grid,
            &problem.terminal,
            problem.v_max,
            problem.tx_power_w,
        )?;
        fpk = fpk_forward(
            &sweep.control,
            &problem.wind,
            grid,
            &problem.initial_density,
        )?;
        let residual = sup_diff(&fpk.density, &density);
        history.push(residual);
        debug!("picard iteration {iter}: residual {residual:e}");

        let delta = problem.picard.damping;
        Zip::from(&mut density)
            .and(&fpk.density)
            .for_each(|old, &new| *old = (1.0 - delta) * *old + delta * new);
        velocity = sweep.control;
        value = sweep.value;
        if residual <= problem.picard.tol {
            converged = true;
            break;
        }
    }

    let field = MeanField {
        density: fpk.density,
        velocity,
    };
    let final_residual = *history.last().expect("at least one iteration");
    info!(
        "picard solve (gamma = {}, w_e = {}): {} iterations, residual {final_residual:e}, converged = {converged}",
        problem.weights.gamma,
        problem.weights.w_energy,
        history.len()
    );
    let report = SolveReport {
        picard_iterations: history.len(),
        final_residual,
        converged,
        residual_history: history,
        tolerance: problem.picard.tol,
        damping: problem.picard.damping,
        v_max: problem.v_max,
        renormalizations: fpk.renormalizations,
        max_mass_error: fpk.max_mass_error,
        min_density: field.min_density(),
    };
    Ok(MfgSolution {
        field,
        value,
        report,
    })
}
