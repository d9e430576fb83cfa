use serde::{Deserialize, Serialize};

use crate::channel::{downlink_rate, expected_path_loss_linear, ChannelParams};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Ground users spread uniformly on `[center - width/2, center + width/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub center: f64,
    pub width: f64,
}

impl Hotspot {
    pub fn lo(&self) -> f64 {
        self.center - 0.5 * self.width
    }

    pub fn hi(&self) -> f64 {
        self.center + 0.5 * self.width
    }
}

/// Quadrature nodes over the user interval.
const USER_NODES: usize = 241;

fn rate_to_user(z: f64, y: f64, channel: &ChannelParams) -> Result<f64> {
    let h = channel.altitude_m;
    let d3d = (z - y).hypot(h);
    let gain = expected_path_loss_linear(h, d3d, channel.carrier_freq_ghz)?;
    Ok(downlink_rate(gain, channel, 1.0))
}

/// Deterministic rate each grid node would see, averaged over a user drawn
/// uniformly from the hotspot (expected LOS/NLOS gain, no fading).
pub fn rate_field(grid: &Grid, channel: &ChannelParams, hotspot: &Hotspot) -> Result<Vec<f64>> {
    if !(hotspot.width >= 0.0) || hotspot.lo() < grid.z_min || hotspot.hi() > grid.z_max {
        return Err(Error::config(
            "fleet.hotspot",
            format!(
                "user interval [{}, {}] must lie inside [{}, {}]",
                hotspot.lo(),
                hotspot.hi(),
                grid.z_min,
                grid.z_max
            ),
        ));
    }
    (0..grid.n_z)
        .map(|i| {
            let z = grid.z(i);
            if hotspot.width == 0.0 {
                return rate_to_user(z, hotspot.center, channel);
            }
            let step = hotspot.width / (USER_NODES - 1) as f64;
            let mut acc = 0.0;
            for k in 0..USER_NODES {
                let w = if k == 0 || k + 1 == USER_NODES {
                    0.5
                } else {
                    1.0
                };
                acc += w * rate_to_user(z, hotspot.lo() + k as f64 * step, channel)?;
            }
            Ok(acc * step / hotspot.width)
        })
        .collect()
}
