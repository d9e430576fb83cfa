//! Uniform space-time grid shared by the HJB and FPK sweeps.

use serde::{Deserialize, Serialize};

use crate::dynamics::Domain;
use crate::error::{Error, Result};

/// `n_z` nodes on `[z_min, z_max]` and `n_t` steps on `[0, T]`, so every
/// time-indexed matrix carries `n_t + 1` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub z_min: f64,
    pub z_max: f64,
    pub n_z: usize,
    pub t_horizon: f64,
    pub n_t: usize,
    pub dz: f64,
    pub dt: f64,
}

impl Grid {
    pub fn new(z_min: f64, z_max: f64, n_z: usize, t_horizon: f64, n_t: usize) -> Result<Self> {
        if n_z < 3 {
            return Err(Error::config("grid.n_z", "must be >= 3"));
        }
        if n_t < 2 {
            return Err(Error::config("grid.n_t", "must be >= 2"));
        }
        if !(z_max > z_min) || !z_min.is_finite() || !z_max.is_finite() {
            return Err(Error::config("grid.z_max", "must exceed grid.z_min"));
        }
        if !(t_horizon > 0.0) || !t_horizon.is_finite() {
            return Err(Error::config("grid.horizon_s", "must be > 0"));
        }
        Ok(Grid {
            z_min,
            z_max,
            n_z,
            t_horizon,
            n_t,
            dz: (z_max - z_min) / (n_z - 1) as f64,
            dt: t_horizon / n_t as f64,
        })
    }

    pub fn domain(&self) -> Domain {
        Domain::new(self.z_min, self.z_max)
    }

    pub fn z(&self, i: usize) -> f64 {
        self.z_min + i as f64 * self.dz
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_z).map(|i| self.z(i)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_t).map(|k| self.t(k)).collect()
    }

    /// Trapezoid weights: `dz` inside, `dz / 2` at the two end nodes.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n_z {
            0.5 * self.dz
        } else {
            self.dz
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.n_z).map(|i| self.weight(i)).collect()
    }

    /// Trapezoid integral of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n_z);
        values
            .iter()
            .enumerate()
            .map(|(i, v)| self.weight(i) * v)
            .sum()
    }

    /// Index of the node nearest to `z`, clamped to the grid.
    pub fn nearest_node(&self, z: f64) -> usize {
        let x = ((z - self.z_min) / self.dz).round();
        x.clamp(0.0, (self.n_z - 1) as f64) as usize
    }

    /// Courant number of an explicit step: advection plus diffusion.
    pub fn courant(&self, max_speed: f64, diffusion: f64) -> f64 {
        max_speed * self.dt / self.dz + 2.0 * diffusion * self.dt / (self.dz * self.dz)
    }

    pub fn check_cfl(&self, max_speed: f64, diffusion: f64) -> Result<()> {
        let courant = self.courant(max_speed, diffusion);
        if courant > 1.0 {
            return Err(Error::Cfl {
                dt: self.dt,
                dz: self.dz,
                speed: max_speed,
                courant,
            });
        }
        Ok(())
    }
}
