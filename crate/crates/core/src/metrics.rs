//! Fleet statistics: collision fraction, energy per rate, velocity
//! consensus, density heat maps.
//!
//! The collision fraction counts, for each UAV, the share of *other* UAVs
//! closer than `d_s`, normalized by `N - 1`. Counting the UAV itself would
//! put a floor of `1/N` under the metric, so a fleet with every pair
//! separated would never report zero.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::agent_sim::FleetTrajectory;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::solver::MeanField;

/// Default velocity-consensus threshold (m/s).
pub const DEFAULT_FLOCKING_THRESHOLD: f64 = 0.1;

/// Ensemble-mean collision fraction regarded as collision-free.
pub const COLLISION_FREE_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyParams {
    /// Collision-safe separation `d_s` (m).
    pub safe_distance: f64,
    /// Target collision probability `epsilon`.
    pub target_collision_prob: f64,
}

impl SafetyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.safe_distance > 0.0) {
            return Err(Error::config("safety.safe_distance", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.target_collision_prob) {
            return Err(Error::config(
                "safety.target_collision_prob",
                "must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Fleet-averaged share of other UAVs within `safe_distance`. Zero for
/// fewer than two UAVs.
pub fn collision_fraction(positions: &[f64], safe_distance: f64) -> f64 {
    let n = positions.len();
    if n < 2 {
        return 0.0;
    }
    let mut sorted = positions.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut close_pairs = 0usize;
    let mut lo = 0;
    for hi in 0..n {
        while sorted[hi] - sorted[lo] >= safe_distance {
            lo += 1;
        }
        close_pairs += hi - lo;
    }
    2.0 * close_pairs as f64 / (n * (n - 1)) as f64
}

pub fn collision_fraction_series(traj: &FleetTrajectory, safe_distance: f64) -> Vec<f64> {
    (0..traj.n_steps())
        .map(|k| collision_fraction(&traj.positions_at(k), safe_distance))
        .collect()
}

/// Time average of the instantaneous collision fraction over all records.
pub fn empirical_collision_probability(traj: &FleetTrajectory, safe_distance: f64) -> f64 {
    mean(&collision_fraction_series(traj, safe_distance))
}

/// Fleet mean of the recorded energy per rate at each step (J/bit).
pub fn energy_per_rate_series(traj: &FleetTrajectory) -> Vec<f64> {
    traj.energy_per_rate
        .columns()
        .into_iter()
        .map(|c| c.mean().unwrap_or(0.0))
        .collect()
}

/// Cross-fleet standard deviation of velocity at each step.
pub fn velocity_spread_series(traj: &FleetTrajectory) -> Vec<f64> {
    traj.velocities
        .columns()
        .into_iter()
        .map(|c| c.std(0.0))
        .collect()
}

/// First time from which `series` stays at or below `threshold` through the
/// last record.
pub fn settle_time(times: &[f64], series: &[f64], threshold: f64) -> Option<f64> {
    let last_above = series.iter().rposition(|&x| x > threshold);
    match last_above {
        None => times.first().copied(),
        Some(k) if k + 1 < series.len() => Some(times[k + 1]),
        Some(_) => None,
    }
}

/// First time after which the velocity spread stays below `threshold`.
pub fn flocking_time(times: &[f64], velocity_spread: &[f64], threshold: f64) -> Option<f64> {
    let last_above = velocity_spread.iter().rposition(|&x| x >= threshold);
    match last_above {
        None => times.first().copied(),
        Some(k) if k + 1 < velocity_spread.len() => Some(times[k + 1]),
        Some(_) => None,
    }
}

/// Velocity spread over the support of `m` (nodes with density above
/// `floor`) at each time row of a solved field.
pub fn field_velocity_spread(field: &MeanField, floor: f64) -> Vec<f64> {
    field
        .density
        .rows()
        .into_iter()
        .zip(field.velocity.rows())
        .map(|(m, v)| {
            let (mut w, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for (&mi, &vi) in m.iter().zip(v.iter()) {
                if mi > floor {
                    w += 1.0;
                    s1 += vi;
                    s2 += vi * vi;
                }
            }
            if w == 0.0 {
                0.0
            } else {
                let mu = s1 / w;
                (s2 / w - mu * mu).max(0.0).sqrt()
            }
        })
        .collect()
}

/// Density heat map (time x space) of a solved field.
pub fn density_heatmap(field: &MeanField) -> Array2<f64> {
    field.density.clone()
}

/// Per-step position histograms on the grid, pooled over `trajs` and
/// normalized to unit trapezoid mass. Each position goes to its nearest node.
pub fn trajectory_heatmap(trajs: &[&FleetTrajectory], grid: &Grid) -> Array2<f64> {
    let steps = trajs.first().map_or(0, |t| t.n_steps());
    let mut out = Array2::<f64>::zeros((steps, grid.n_z));
    let mut total = 0usize;
    for traj in trajs {
        debug_assert_eq!(traj.n_steps(), steps);
        total += traj.n_uav();
        for ((_, k), &z) in traj.positions.indexed_iter() {
            out[[k, grid.nearest_node(z)]] += 1.0;
        }
    }
    if total > 0 {
        for mut row in out.rows_mut() {
            for (i, x) in row.iter_mut().enumerate() {
                *x /= total as f64 * grid.weight(i);
            }
        }
    }
    out
}

/// `sum_i w_i |a_i - b_i|` with trapezoid weights.
pub fn l1_distance(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| grid.weight(i) * (x - y).abs())
        .sum()
}

/// Position at which the cumulative trapezoid mass reaches `q`.
pub fn density_quantile(grid: &Grid, density: &[f64], q: f64) -> f64 {
    let mut cdf = Vec::with_capacity(grid.n_z);
    let mut acc = 0.0;
    cdf.push(0.0);
    for i in 1..grid.n_z {
        acc += 0.5 * grid.dz * (density[i - 1] + density[i]);
        cdf.push(acc);
    }
    let target = q * acc;
    let k = cdf.partition_point(|&c| c < target);
    if k == 0 {
        return grid.z_min;
    }
    if k >= grid.n_z {
        return grid.z_max;
    }
    let span = cdf[k] - cdf[k - 1];
    let frac = if span > 0.0 {
        (target - cdf[k - 1]) / span
    } else {
        0.0
    };
    grid.z(k - 1) + frac * grid.dz
}

pub fn interquartile_width(grid: &Grid, density: &[f64]) -> f64 {
    density_quantile(grid, density, 0.75) - density_quantile(grid, density, 0.25)
}

/// First time the interquartile width exceeds `factor` times its initial
/// value.
pub fn spreading_onset(grid: &Grid, heatmap: &Array2<f64>, factor: f64) -> Option<f64> {
    let widths: Vec<f64> = heatmap
        .rows()
        .into_iter()
        .map(|r| interquartile_width(grid, &r.to_vec()))
        .collect();
    let w0 = *widths.first()?;
    widths
        .iter()
        .position(|&w| w > factor * w0)
        .map(|k| grid.t(k))
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Mean over the last quarter of the records.
pub fn final_quartile_mean(xs: &[f64]) -> f64 {
    let start = xs.len() - xs.len().div_ceil(4);
    mean(&xs[start..])
}

/// Element-wise mean of equally long series.
pub fn ensemble_mean(series: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = series.first() else {
        return Vec::new();
    };
    let mut out = vec![0.0; first.len()];
    for s in series {
        for (o, x) in out.iter_mut().zip(s) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= series.len() as f64);
    out
}
