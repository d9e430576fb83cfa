use log::debug;
use ndarray::Array2;

use crate::dynamics::WindModel;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Per-step mass drift above which the density is renormalized.
pub const MASS_DRIFT_TOL: f64 = 1e-12;
/// Most negative density value accepted from the scheme.
pub const NEGATIVITY_TOL: f64 = -1e-12;

/// Target Courant number of one forward-Euler stage.
const STAGE_COURANT: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct FpkOutput {
    pub density: Array2<f64>,
    /// Steps whose mass drift exceeded [`MASS_DRIFT_TOL`].
    pub renormalizations: usize,
    /// Largest `|int m dz - 1|` seen before any renormalization.
    pub max_mass_error: f64,
}

/// Normal density restricted to the grid and renormalized to unit trapezoid
/// mass.
pub fn gaussian_density(grid: &Grid, mean: f64, std: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..grid.n_z)
        .map(|i| {
            let x = (grid.z(i) - mean) / std;
            (-0.5 * x * x).exp()
        })
        .collect();
    let mass = grid.integrate(&raw);
    raw.into_iter().map(|m| m / mass).collect()
}

/// Monotonized-central slope limiter.
fn mc_slope(left: f64, right: f64) -> f64 {
    if left * right <= 0.0 {
        return 0.0;
    }
    let s = (0.5 * (left + right))
        .abs()
        .min(2.0 * left.abs())
        .min(2.0 * right.abs());
    s.copysign(left)
}

/// Fifth-order WENO-Z value at the right edge of the `c` cell, from the
/// upwind-biased stencil `(c-2, c-1, c, c+1, c+2)`.
fn weno5(a: [f64; 5]) -> f64 {
    const EPS: f64 = 1e-40;
    let [m2, m1, c, p1, p2] = a;
    let q0 = (2.0 * m2 - 7.0 * m1 + 11.0 * c) / 6.0;
    let q1 = (-m1 + 5.0 * c + 2.0 * p1) / 6.0;
    let q2 = (2.0 * c + 5.0 * p1 - p2) / 6.0;
    let b0 = 13.0 / 12.0 * (m2 - 2.0 * m1 + c).powi(2) + 0.25 * (m2 - 4.0 * m1 + 3.0 * c).powi(2);
    let b1 = 13.0 / 12.0 * (m1 - 2.0 * c + p1).powi(2) + 0.25 * (m1 - p1).powi(2);
    let b2 = 13.0 / 12.0 * (c - 2.0 * p1 + p2).powi(2) + 0.25 * (3.0 * c - 4.0 * p1 + p2).powi(2);
    let tau = (b0 - b2).abs();
    let a0 = 0.1 * (1.0 + tau / (b0 + EPS));
    let a1 = 0.6 * (1.0 + tau / (b1 + EPS));
    let a2 = 0.3 * (1.0 + tau / (b2 + EPS));
    (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2)
}

/// Upwind face value of `m` between cells `f` and `f + 1`. WENO where the
/// five-cell stencil fits, limited linear next to the walls. Never negative.
fn face_value(m: &[f64], f: usize, rightward: bool) -> f64 {
    let n = m.len();
    let slope = |i: usize| {
        if i == 0 || i + 1 == n {
            0.0
        } else {
            mc_slope(m[i] - m[i - 1], m[i + 1] - m[i])
        }
    };
    let q = if rightward {
        if f >= 2 && f + 2 < n {
            weno5([m[f - 2], m[f - 1], m[f], m[f + 1], m[f + 2]])
        } else {
            m[f] + 0.5 * slope(f)
        }
    } else if f >= 1 && f + 3 < n {
        weno5([m[f + 3], m[f + 2], m[f + 1], m[f], m[f - 1]])
    } else {
        m[f + 1] - 0.5 * slope(f + 1)
    };
    q.max(0.0)
}

/// Net flux through the `n - 1` interior faces: upwind advection on the
/// face drift plus central diffusion.
fn face_fluxes(m: &[f64], drift: &[f64], diffusion: f64, dz: f64, out: &mut [f64]) {
    for f in 0..out.len() {
        let b = 0.5 * (drift[f] + drift[f + 1]);
        out[f] = b * face_value(m, f, b >= 0.0) - diffusion * (m[f + 1] - m[f]) / dz;
    }
}

/// Forward-Euler stage. Outgoing fluxes of a cell are scaled down when they
/// would drain more than its content, which keeps the stage non-negative
/// without breaking conservation.
#[allow(clippy::too_many_arguments)]
fn euler_stage(
    grid: &Grid,
    m: &[f64],
    drift: &[f64],
    diffusion: f64,
    dt: f64,
    flux: &mut [f64],
    scale: &mut [f64],
    out: &mut [f64],
) {
    let n = m.len();
    face_fluxes(m, drift, diffusion, grid.dz, flux);
    for i in 0..n {
        let mut drain = 0.0;
        if i > 0 && flux[i - 1] < 0.0 {
            drain -= flux[i - 1];
        }
        if i + 1 < n && flux[i] > 0.0 {
            drain += flux[i];
        }
        let content = m[i].max(0.0) * grid.weight(i);
        scale[i] = if drain * dt > content {
            content / (drain * dt)
        } else {
            1.0
        };
    }
    for (f, fl) in flux.iter_mut().enumerate() {
        let donor = if *fl > 0.0 { f } else { f + 1 };
        *fl *= scale[donor];
    }
    for i in 0..n {
        let inflow = if i > 0 { flux[i - 1] } else { 0.0 };
        let outflow = if i + 1 < n { flux[i] } else { 0.0 };
        out[i] = m[i] - dt / grid.weight(i) * (outflow - inflow);
    }
}

/// Forward sweep of `dm/dt = -d/dz[(v + A) m] + (eta^2/2) d2m/dz2` in
/// conservative finite-volume form on the trapezoid cells, with no-flux
/// walls. Row `k` of `velocity` is held over `[t_k, t_k+1)`. Each step is
/// split into SSP-RK3 substeps at a stage Courant number of 0.25.
pub fn fpk_forward(
    velocity: &Array2<f64>,
    wind: &WindModel,
    grid: &Grid,
    initial: &[f64],
) -> Result<FpkOutput> {
    let (n, n_t) = (grid.n_z, grid.n_t);
    if velocity.dim() != (n_t + 1, n) || initial.len() != n {
        return Err(Error::Domain(format!(
            "velocity field {:?} / initial density {} do not match grid ({}, {n})",
            velocity.dim(),
            initial.len(),
            n_t + 1
        )));
    }
    let init_mass = grid.integrate(initial);
    if (init_mass - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!(
            "initial density integrates to {init_mass}"
        )));
    }
    let diffusion = wind.diffusion();

    let mut density = Array2::<f64>::zeros((n_t + 1, n));
    density
        .row_mut(0)
        .assign(&ndarray::ArrayView1::from(initial));
    let mut m = initial.to_vec();
    let mut drift = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut stage2 = vec![0.0; n];
    let mut stage3 = vec![0.0; n];
    let mut scale = vec![0.0; n];
    let mut flux = vec![0.0; n - 1];
    let mut renormalizations = 0;
    let mut max_mass_error = (init_mass - 1.0).abs();

    for k in 0..n_t {
        for (d, v) in drift.iter_mut().zip(velocity.row(k)) {
            *d = v + wind.mean_velocity;
        }
        let max_speed = drift.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let courant = grid.courant(max_speed, diffusion);
        if courant > 1.0 {
            return Err(Error::Cfl {
                dt: grid.dt,
                dz: grid.dz,
                speed: max_speed,
                courant,
            });
        }
        let substeps = ((courant / STAGE_COURANT).ceil() as usize).max(1);
        let h = grid.dt / substeps as f64;
        for _ in 0..substeps {
            euler_stage(
                grid, &m, &drift, diffusion, h, &mut flux, &mut scale, &mut stage,
            );
            euler_stage(
                grid,
                &stage,
                &drift,
                diffusion,
                h,
                &mut flux,
                &mut scale,
                &mut stage2,
            );
            for i in 0..n {
                stage2[i] = 0.75 * m[i] + 0.25 * stage2[i];
            }
            euler_stage(
                grid,
                &stage2,
                &drift,
                diffusion,
                h,
                &mut flux,
                &mut scale,
                &mut stage3,
            );
            for i in 0..n {
                m[i] = m[i] / 3.0 + 2.0 / 3.0 * stage3[i];
            }
        }

        let min = m.iter().copied().fold(f64::INFINITY, f64::min);
        if min < NEGATIVITY_TOL {
            return Err(Error::Scheme(format!(
                "negative density {min:e} at t = {}",
                grid.t(k + 1)
            )));
        }
        let mass = grid.integrate(&m);
        let drift_err = (mass - 1.0).abs();
        max_mass_error = max_mass_error.max(drift_err);
        if drift_err > MASS_DRIFT_TOL {
            debug!(
                "renormalizing density at t = {}: mass {mass}",
                grid.t(k + 1)
            );
            renormalizations += 1;
            m.iter_mut().for_each(|x| *x /= mass);
        }
        density
            .row_mut(k + 1)
            .assign(&ndarray::ArrayView1::from(&m[..]));
    }
    Ok(FpkOutput {
        density,
        renormalizations,
        max_mass_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(grid: &Grid, m: &[f64]) -> (f64, f64) {
        let mean = (0..grid.n_z)
            .map(|i| grid.weight(i) * m[i] * grid.z(i))
            .sum::<f64>();
        let var = (0..grid.n_z)
            .map(|i| grid.weight(i) * m[i] * (grid.z(i) - mean).powi(2))
            .sum::<f64>();
        (mean, var)
    }

    #[test]
    fn frozen_dynamics_keep_density() {
        let grid = Grid::new(0.0, 300.0, 128, 20.0, 200).unwrap();
        let m0 = gaussian_density(&grid, 210.0, 30f64.sqrt());
        let v = Array2::from_elem((201, 128), 3.0);
        let wind = WindModel {
            mean_velocity: -3.0,
            volatility: 0.0,
        };
        let out = fpk_forward(&v, &wind, &grid, &m0).unwrap();
        for row in out.density.rows() {
            for (a, b) in row.iter().zip(&m0) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_advection_translates_mean() {
        let grid = Grid::new(0.0, 300.0, 301, 20.0, 400).unwrap();
        let m0 = gaussian_density(&grid, 200.0, 8.0);
        let v = Array2::from_elem((401, 301), 0.0);
        let wind = WindModel {
            mean_velocity: -3.0,
            volatility: 0.0,
        };
        let out = fpk_forward(&v, &wind, &grid, &m0).unwrap();
        for k in [100, 200, 400] {
            let (mean, _) = moments(&grid, out.density.row(k).as_slice().unwrap());
            let expected = 200.0 - 3.0 * grid.t(k);
            assert!(
                (mean - expected).abs() < grid.dz,
                "t={} mean={mean}",
                grid.t(k)
            );
        }
    }

    #[test]
    fn pure_diffusion_variance_growth() {
        let grid = Grid::new(0.0, 300.0, 601, 20.0, 400).unwrap();
        let m0 = gaussian_density(&grid, 150.0, 5.0);
        let v = Array2::from_elem((401, 601), 0.0);
        let wind = WindModel {
            mean_velocity: 0.0,
            volatility: 1.0,
        };
        let out = fpk_forward(&v, &wind, &grid, &m0).unwrap();
        let (_, var0) = moments(&grid, &m0);
        let (_, var_t) = moments(&grid, out.density.row(400).as_slice().unwrap());
        let growth = var_t - var0;
        assert!((growth - 20.0).abs() < 0.02 * 20.0, "growth {growth}");
    }

    #[test]
    fn mass_and_positivity_under_varying_field() {
        let grid = Grid::new(0.0, 300.0, 128, 20.0, 200).unwrap();
        let m0 = gaussian_density(&grid, 210.0, 30f64.sqrt());
        let v = Array2::from_shape_fn((201, 128), |(k, i)| {
            4.0 * ((i as f64) * 0.2 + k as f64 * 0.05).sin()
        });
        let wind = WindModel {
            mean_velocity: -3.0,
            volatility: 0.1,
        };
        let out = fpk_forward(&v, &wind, &grid, &m0).unwrap();
        assert!(out.max_mass_error <= 1e-6);
        assert_eq!(out.renormalizations, 0);
        assert!(out.density.iter().all(|&x| x >= NEGATIVITY_TOL));
    }
}
