//! Wind-perturbed UAV motion along the flight line.
//!
//! `dz = (v + A) dt + eta dW`, integrated by Euler-Maruyama. The noise is
//! additive, so one step is exact in distribution. Positions are reflected at
//! the domain edges, which matches the no-flux boundary of the density sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindModel {
    /// Mean wind velocity `A` along the line (m/s, signed).
    pub mean_velocity: f64,
    /// Wind volatility `eta_A` (m/s per sqrt(s)).
    pub volatility: f64,
}

impl WindModel {
    pub fn validate(&self) -> Result<()> {
        if !self.mean_velocity.is_finite() {
            return Err(Error::config("wind.mean_velocity", "must be finite"));
        }
        if !(self.volatility >= 0.0 && self.volatility.is_finite()) {
            return Err(Error::config("wind.volatility", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Diffusion coefficient `eta^2 / 2` of the position process.
    pub fn diffusion(&self) -> f64 {
        0.5 * self.volatility * self.volatility
    }
}

/// Closed interval the UAVs fly over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub min: f64,
    pub max: f64,
}

impl Domain {
    pub fn new(min: f64, max: f64) -> Self {
        assert!(max > min, "empty domain [{min}, {max}]");
        Domain { min, max }
    }

    pub fn length(&self) -> f64 {
        self.max - self.min
    }

    /// Mirror-reflects `z` back into the domain, folding as often as needed.
    pub fn reflect(&self, z: f64) -> f64 {
        let len = self.length();
        let period = 2.0 * len;
        let mut offset = (z - self.min).rem_euclid(period);
        if offset > len {
            offset = period - offset;
        }
        (self.min + offset).clamp(self.min, self.max)
    }

    pub fn contains(&self, z: f64) -> bool {
        (self.min..=self.max).contains(&z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: f64,
    /// Commanded velocity, held constant over a step.
    pub velocity: f64,
}

/// Net drift of a UAV: commanded velocity plus mean wind.
pub fn drift(velocity: f64, wind: &WindModel) -> f64 {
    velocity + wind.mean_velocity
}

/// One Euler-Maruyama step with a standard-normal increment `noise`.
pub fn em_step(
    state: UavState,
    wind: &WindModel,
    dt: f64,
    noise: f64,
    domain: &Domain,
) -> Result<UavState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!(
            "time step {dt} must be finite and > 0"
        )));
    }
    if !(state.position.is_finite() && state.velocity.is_finite() && noise.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite step input: z = {}, v = {}, noise = {noise}",
            state.position, state.velocity
        )));
    }
    let mut z = state.position + drift(state.velocity, wind) * dt;
    if wind.volatility > 0.0 {
        z += wind.volatility * dt.sqrt() * noise;
    }
    Ok(UavState {
        position: if domain.contains(z) {
            z
        } else {
            domain.reflect(z)
        },
        velocity: state.velocity,
    })
}
