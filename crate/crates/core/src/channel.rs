//! 3GPP urban-micro air-to-ground channel.
//!
//! Path loss for LOS and NLOS links, the LOS probability as a function of
//! altitude and ground distance, and the Shannon downlink rate on a dedicated
//! per-user band. Carrier frequency is taken in GHz, so `20 log10(f)` adds
//! about 6.02 dB at 2 GHz.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest altitude covered by the UMi aerial LOS-probability fit.
pub const MIN_ALTITUDE_M: f64 = 22.5;
/// Highest altitude covered by the UMi aerial LOS-probability fit.
pub const MAX_ALTITUDE_M: f64 = 300.0;

/// Converts a dBm power (or dBm/Hz density) to watts (or W/Hz).
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a loss in dB to a linear power gain `10^(-loss/10)`.
pub fn loss_db_to_gain(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub carrier_freq_ghz: f64,
    pub tx_power_dbm: f64,
    pub noise_density_dbm_hz: f64,
    /// Bandwidth of the dedicated per-user band.
    pub bandwidth_hz: f64,
    pub shadow_std_db: f64,
    pub altitude_m: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_freq_ghz > 0.0) {
            return Err(Error::config("channel.carrier_freq_ghz", "must be > 0"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::config("channel.bandwidth_hz", "must be > 0"));
        }
        if !(self.shadow_std_db >= 0.0) {
            return Err(Error::config("channel.shadow_std_db", "must be >= 0"));
        }
        if !self.tx_power_dbm.is_finite() || !self.noise_density_dbm_hz.is_finite() {
            return Err(Error::config(
                "channel.tx_power_dbm",
                "power and noise density must be finite",
            ));
        }
        check_altitude(self.altitude_m)
            .map_err(|e| Error::config("channel.altitude_m", e.to_string()))
    }

    pub fn tx_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    /// Thermal noise power `N_o * B` over the per-user band, in watts.
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_density_dbm_hz) * self.bandwidth_hz
    }
}

fn check_altitude(h: f64) -> Result<()> {
    if (MIN_ALTITUDE_M..=MAX_ALTITUDE_M).contains(&h) {
        Ok(())
    } else {
        Err(Error::Validity(format!(
            "altitude {h} m outside the 3GPP aerial UE model range {MIN_ALTITUDE_M} m <= h <= {MAX_ALTITUDE_M} m"
        )))
    }
}

/// UAV-to-user geometry at a fixed altitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub d3d_m: f64,
    pub d2d_m: f64,
}

impl LinkGeometry {
    /// Geometry for a UAV at horizontal offset `dx` from its user.
    pub fn from_offset(dx: f64, altitude_m: f64) -> Self {
        let d2d_m = dx.abs();
        LinkGeometry {
            d3d_m: d2d_m.hypot(altitude_m),
            d2d_m,
        }
    }

    /// Recovers the ground distance from a 3-D distance. A 3-D distance
    /// below the altitude (rounding) maps to zero ground distance.
    pub fn from_d3d(d3d_m: f64, altitude_m: f64) -> Self {
        let d2d_sq = d3d_m * d3d_m - altitude_m * altitude_m;
        LinkGeometry {
            d3d_m,
            d2d_m: d2d_sq.max(0.0).sqrt(),
        }
    }
}

/// LOS probability for altitude `h` and ground distance `d2d`.
pub fn los_probability(h: f64, d2d: f64) -> Result<f64> {
    check_altitude(h)?;
    if !(d2d >= 0.0) {
        return Err(Error::Domain(format!(
            "ground distance {d2d} m must be >= 0"
        )));
    }
    let log_h = h.log10();
    let d_o = (294.05 * log_h - 432.94).max(18.0);
    if d2d <= d_o {
        return Ok(1.0);
    }
    let p1 = 233.98 * log_h - 0.95;
    let ratio = d_o / d2d;
    Ok((ratio + (-d2d / p1).exp() * (1.0 - ratio)).clamp(0.0, 1.0))
}

fn check_link(h: f64, d3d: f64, f_ghz: f64) -> Result<()> {
    if !(d3d > 0.0) {
        return Err(Error::Domain(format!("3-D distance {d3d} m must be > 0")));
    }
    if !(h > 0.0) {
        return Err(Error::Domain(format!("altitude {h} m must be > 0")));
    }
    if !(f_ghz > 0.0) {
        return Err(Error::Domain(format!(
            "carrier frequency {f_ghz} GHz must be > 0"
        )));
    }
    Ok(())
}

/// LOS path loss in dB.
pub fn path_loss_los(h: f64, d3d: f64, f_ghz: f64) -> Result<f64> {
    check_link(h, d3d, f_ghz)?;
    Ok(30.9 + (22.25 - 0.5 * h.log10()) * d3d.log10() + 20.0 * f_ghz.log10())
}

/// NLOS path loss in dB, never below the LOS loss for the same link.
pub fn path_loss_nlos(h: f64, d3d: f64, f_ghz: f64) -> Result<f64> {
    let los = path_loss_los(h, d3d, f_ghz)?;
    let nlos = 32.4 + (43.2 - 7.6 * h.log10()) * d3d.log10() + 20.0 * f_ghz.log10();
    Ok(los.max(nlos))
}

/// LOS-probability-weighted average of the linear LOS and NLOS gains.
pub fn expected_path_loss_linear(h: f64, d3d: f64, f_ghz: f64) -> Result<f64> {
    let geom = LinkGeometry::from_d3d(d3d, h);
    let p_los = los_probability(h, geom.d2d_m)?;
    let g_los = loss_db_to_gain(path_loss_los(h, d3d, f_ghz)?);
    if p_los >= 1.0 {
        return Ok(g_los);
    }
    let g_nlos = loss_db_to_gain(path_loss_nlos(h, d3d, f_ghz)?);
    Ok(p_los * g_los + (1.0 - p_los) * g_nlos)
}

/// Shannon downlink rate in bits/s on the per-user band.
pub fn downlink_rate(gain_linear: f64, params: &ChannelParams, fading_g: f64) -> f64 {
    let snr = (fading_g * params.tx_power_w() * gain_linear / params.noise_power_w()).max(0.0);
    params.bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkState {
    Los,
    Nlos,
}

/// Draws the link state from a uniform sample `u` in `[0, 1)`.
pub fn sample_link_state(p_los: f64, u: f64) -> LinkState {
    if u < p_los {
        LinkState::Los
    } else {
        LinkState::Nlos
    }
}

/// Path loss in dB for a realized link state.
pub fn path_loss_for_state(state: LinkState, h: f64, d3d: f64, f_ghz: f64) -> Result<f64> {
    match state {
        LinkState::Los => path_loss_los(h, d3d, f_ghz),
        LinkState::Nlos => path_loss_nlos(h, d3d, f_ghz),
    }
}
