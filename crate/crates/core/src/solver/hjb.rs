use ndarray::Array2;

use super::control::{optimal_velocity_from_moments, KernelTable};
use super::{central_gradient, MeanField, ValueFunction};
use crate::cost::{CostWeights, KernelMoments, NORMALIZATION_TOL, RATE_FLOOR};
use crate::dynamics::WindModel;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Output of one backward sweep: `psi` and the optimal velocity field it
/// induces against the frozen mean field.
#[derive(Debug, Clone)]
pub struct HjbSweep {
    pub value: ValueFunction,
    pub control: Array2<f64>,
}

/// Explicit backward sweep of
///
/// ```text
/// 0 = dpsi/dt + min_v [ w_e E(v) + w_f F(v; m, v_field) + (v + A) dpsi/dz ] + (eta^2/2) d2psi/dz2
/// ```
///
/// from `psi(., T) = terminal`. The minimizer is the closed-form control
/// evaluated with the central gradient of the later time level. Advection
/// uses a one-sided difference upwind of `v* + A`, diffusion a central
/// stencil; both are Neumann at the edges.
#[allow(clippy::too_many_arguments)]
pub fn hjb_backward(
    field: &MeanField,
    rate: &[f64],
    weights: &CostWeights,
    wind: &WindModel,
    grid: &Grid,
    terminal: &[f64],
    v_max: f64,
    tx_power_w: f64,
) -> Result<HjbSweep> {
    let (n, n_t) = (grid.n_z, grid.n_t);
    if field.density.dim() != (n_t + 1, n) || field.velocity.dim() != (n_t + 1, n) {
        return Err(Error::Domain(format!(
            "mean field shape {:?} does not match grid ({}, {n})",
            field.density.dim(),
            n_t + 1
        )));
    }
    if rate.len() != n || terminal.len() != n {
        return Err(Error::Domain(
            "rate field or terminal condition has wrong length".into(),
        ));
    }
    let mass_err = field.max_mass_error(grid);
    if mass_err > NORMALIZATION_TOL {
        return Err(Error::Domain(format!(
            "mean field density off normalization by {mass_err}"
        )));
    }

    let table = (weights.w_flock > 0.0).then(|| KernelTable::new(grid, weights));
    let diffusion = wind.diffusion();
    let (dz, dt) = (grid.dz, grid.dt);

    let mut psi = Array2::<f64>::zeros((n_t + 1, n));
    let mut control = Array2::<f64>::zeros((n_t + 1, n));
    psi.row_mut(n_t)
        .assign(&ndarray::ArrayView1::from(terminal));

    let mut v_star = vec![0.0; n];
    let mut moments = vec![KernelMoments::default(); n];
    for k in (0..=n_t).rev() {
        let grad = if k == n_t {
            vec![0.0; n]
        } else {
            central_gradient(grid, psi.row(k + 1).as_slice().expect("standard layout"))
        };
        let m_k = field.density.row(k);
        let v_k = field.velocity.row(k);
        for i in 0..n {
            moments[i] = match &table {
                Some(t) => t.moments(
                    i,
                    m_k.as_slice().expect("standard layout"),
                    v_k.as_slice().expect("standard layout"),
                ),
                None => KernelMoments::default(),
            };
            v_star[i] =
                optimal_velocity_from_moments(grad[i], &moments[i], rate[i], weights, v_max);
        }
        control
            .row_mut(k)
            .assign(&ndarray::ArrayView1::from(&v_star[..]));
        if k == n_t {
            continue;
        }

        let max_speed = v_star
            .iter()
            .map(|v| (v + wind.mean_velocity).abs())
            .fold(0.0, f64::max);
        grid.check_cfl(max_speed, diffusion)?;

        let later: Vec<f64> = psi.row(k + 1).to_vec();
        let mut row = psi.row_mut(k);
        for i in 0..n {
            let b = v_star[i] + wind.mean_velocity;
            let upwind = if b > 0.0 {
                if i + 1 < n {
                    (later[i + 1] - later[i]) / dz
                } else {
                    0.0
                }
            } else if i > 0 {
                (later[i] - later[i - 1]) / dz
            } else {
                0.0
            };
            let lap = if i == 0 {
                2.0 * (later[1] - later[0]) / (dz * dz)
            } else if i + 1 == n {
                2.0 * (later[n - 2] - later[n - 1]) / (dz * dz)
            } else {
                (later[i + 1] - 2.0 * later[i] + later[i - 1]) / (dz * dz)
            };
            let v = v_star[i];
            let energy = (0.5 * weights.mass * v * v + tx_power_w + weights.fixed_power)
                / rate[i].max(RATE_FLOOR);
            let running = weights.w_energy * energy + weights.w_flock * moments[i].flocking_cost(v);
            row[i] = later[i] + dt * (running + b * upwind + diffusion * lap);
        }
    }
    Ok(HjbSweep {
        value: ValueFunction { values: psi },
        control,
    })
}
