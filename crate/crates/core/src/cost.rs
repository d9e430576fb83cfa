//! Per-UAV cost terms.
//!
//! Energy per bit combines movement power `a_m v^2 / 2` with transmit plus
//! fixed power `P_u + a_e`, all divided by the downlink rate (J/bit). The
//! flocking cost penalizes velocity mismatch, weighted by the Cucker-Smale
//! kernel `(1/gamma + d^2)^-beta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Lower clamp on the rate before it divides a power (bits/s).
pub const RATE_FLOOR: f64 = 1.0;

/// Tolerance on `|int m dz - 1|` accepted by the mean-field cost terms.
pub const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_energy: f64,
    pub w_flock: f64,
    /// Collision aversion factor.
    pub gamma: f64,
    /// Kernel decay exponent, `0 < beta <= 0.5`.
    pub beta: f64,
    /// UAV mass (kg).
    pub mass: f64,
    /// Fixed power draw independent of transmission (W).
    pub fixed_power: f64,
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_energy >= 0.0) {
            return Err(Error::config("cost.w_energy", "must be >= 0"));
        }
        if !(self.w_flock >= 0.0) {
            return Err(Error::config("cost.w_flock", "must be >= 0"));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::config("cost.gamma", "must be finite and > 0"));
        }
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(Error::config("cost.beta", "must satisfy 0 < beta <= 0.5"));
        }
        if !(self.mass > 0.0) {
            return Err(Error::config("cost.mass", "must be > 0"));
        }
        if !(self.fixed_power >= 0.0) {
            return Err(Error::config("cost.fixed_power", "must be >= 0"));
        }
        Ok(())
    }

    /// Kernel weight at `distance` for already-validated weights.
    pub fn kernel_at(&self, distance: f64) -> f64 {
        (1.0 / self.gamma + distance * distance).powf(-self.beta)
    }
}

/// Cucker-Smale interaction weight `1 / (1/gamma + d^2)^beta`.
pub fn kernel(distance: f64, gamma: f64, beta: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!(
            "collision aversion factor {gamma} must be > 0"
        )));
    }
    if !(distance >= 0.0) {
        return Err(Error::Domain(format!("distance {distance} must be >= 0")));
    }
    Ok((1.0 / gamma + distance * distance).powf(-beta))
}

/// Movement plus transmit power per unit rate (J/bit).
pub fn energy_cost(
    velocity: f64,
    rate: f64,
    weights: &CostWeights,
    tx_power_w: f64,
) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::Domain(format!(
            "rate {rate} bit/s is not positive (dead link); clamp to RATE_FLOOR first"
        )));
    }
    Ok((0.5 * weights.mass * velocity * velocity + tx_power_w + weights.fixed_power) / rate)
}

/// Finite-fleet flocking cost of UAV `i`. The self term is zero.
pub fn flocking_cost_finite(
    i: usize,
    positions: &[f64],
    velocities: &[f64],
    weights: &CostWeights,
) -> Result<f64> {
    let n = positions.len();
    if velocities.len() != n {
        return Err(Error::Domain(format!(
            "{n} positions but {} velocities",
            velocities.len()
        )));
    }
    if i >= n {
        return Err(Error::Index { index: i, len: n });
    }
    let (zi, vi) = (positions[i], velocities[i]);
    let sum: f64 = positions
        .iter()
        .zip(velocities)
        .map(|(&zj, &vj)| {
            let dv = vj - vi;
            dv * dv * weights.kernel_at((zj - zi).abs())
        })
        .sum();
    Ok(sum / n as f64)
}

/// Density and velocity field on the grid at one instant.
#[derive(Debug, Clone, Copy)]
pub struct FieldSlice<'a> {
    pub grid: &'a Grid,
    pub density: &'a [f64],
    pub velocity: &'a [f64],
}

impl<'a> FieldSlice<'a> {
    pub fn new(grid: &'a Grid, density: &'a [f64], velocity: &'a [f64]) -> Self {
        debug_assert_eq!(density.len(), grid.n_z);
        debug_assert_eq!(velocity.len(), grid.n_z);
        FieldSlice {
            grid,
            density,
            velocity,
        }
    }

    pub fn check_normalized(&self) -> Result<()> {
        let mass = self.grid.integrate(self.density);
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Domain(format!(
                "density integrates to {mass}, expected 1 within {NORMALIZATION_TOL}"
            )));
        }
        Ok(())
    }

    /// Kernel-weighted moments of the field seen from position `z`.
    pub fn moments(&self, z: f64, weights: &CostWeights) -> KernelMoments {
        let mut out = KernelMoments::default();
        for j in 0..self.grid.n_z {
            let w = self.grid.weight(j)
                * self.density[j]
                * weights.kernel_at((self.grid.z(j) - z).abs());
            let v = self.velocity[j];
            out.mass += w;
            out.momentum += w * v;
            out.energy += w * v * v;
        }
        out
    }
}

/// `int m K`, `int m v K` and `int m v^2 K` around one position. The expected
/// flocking cost is the quadratic `energy - 2 v momentum + v^2 mass`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KernelMoments {
    pub mass: f64,
    pub momentum: f64,
    pub energy: f64,
}

impl KernelMoments {
    pub fn flocking_cost(&self, v: f64) -> f64 {
        // Clamp rounding below zero; the exact quadratic is nonnegative.
        (self.energy - 2.0 * v * self.momentum + v * v * self.mass).max(0.0)
    }
}

/// Mean-field expected flocking cost by trapezoid quadrature.
pub fn expected_flocking_cost(
    v_candidate: f64,
    z: f64,
    field: &FieldSlice<'_>,
    weights: &CostWeights,
) -> Result<f64> {
    field.check_normalized()?;
    let g = field.grid;
    Ok((0..g.n_z)
        .map(|j| {
            let dv = field.velocity[j] - v_candidate;
            g.weight(j) * field.density[j] * dv * dv * weights.kernel_at((g.z(j) - z).abs())
        })
        .sum())
}

/// Running cost `w_e E(v) + w_f F(v)` at position `z`. The rate is clamped
/// to [`RATE_FLOOR`].
pub fn running_cost(
    v: f64,
    z: f64,
    field: &FieldSlice<'_>,
    weights: &CostWeights,
    rate_at_z: f64,
    tx_power_w: f64,
) -> Result<f64> {
    let energy = energy_cost(v, rate_at_z.max(RATE_FLOOR), weights, tx_power_w)?;
    let flock = if weights.w_flock > 0.0 {
        expected_flocking_cost(v, z, field, weights)?
    } else {
        0.0
    };
    Ok(weights.w_energy * energy + weights.w_flock * flock)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn weights(gamma: f64) -> CostWeights {
        CostWeights {
            w_energy: 1.0,
            w_flock: 1.0,
            gamma,
            beta: 0.5,
            mass: 1.0,
            fixed_power: 0.0,
        }
    }

    fn point_mass(grid: &Grid, node: usize) -> Vec<f64> {
        let mut m = vec![0.0; grid.n_z];
        m[node] = 1.0 / grid.weight(node);
        m
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel(0.0, 1.0, 0.5).unwrap(), 1.0);
        assert_relative_eq!(
            kernel(1.0, 1.0, 0.5).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2
        );
        assert_relative_eq!(kernel(0.0, 4.0, 0.5).unwrap(), 2.0);
        assert!(kernel(1.0, 0.0, 0.5).is_err());
        assert!(kernel(1.0, -2.0, 0.5).is_err());
    }

    #[test]
    fn energy_examples() {
        let mut w = weights(1.0);
        assert_relative_eq!(energy_cost(0.0, 5e6, &w, 0.2).unwrap(), 0.2 / 5e6);
        assert_relative_eq!(energy_cost(2.0, 1.0, &w, 0.0).unwrap(), 2.0);
        assert_relative_eq!(
            energy_cost(2.0, 1e6, &w, 0.2).unwrap(),
            2.2e-6,
            max_relative = 1e-12
        );
        w.fixed_power = 1.0;
        assert_relative_eq!(energy_cost(0.0, 2.0, &w, 0.0).unwrap(), 0.5);
        assert!(energy_cost(1.0, 0.0, &w, 0.2).is_err());
        assert!(energy_cost(1.0, -3.0, &w, 0.2).is_err());
    }

    #[test]
    fn finite_flocking_examples() {
        let w = weights(1.0);
        assert_eq!(
            flocking_cost_finite(0, &[0.0, 3.0, 7.0], &[1.5; 3], &w).unwrap(),
            0.0
        );
        assert_relative_eq!(
            flocking_cost_finite(0, &[0.0, 1.0], &[0.0, 2.0], &w).unwrap(),
            std::f64::consts::SQRT_2,
            max_relative = 1e-14
        );
        assert_eq!(flocking_cost_finite(0, &[4.0], &[9.0], &w).unwrap(), 0.0);
        assert!(matches!(
            flocking_cost_finite(3, &[0.0, 1.0], &[0.0, 1.0], &w),
            Err(Error::Index { index: 3, len: 2 })
        ));
    }

    #[test]
    fn expected_flocking_point_mass() {
        let grid = Grid::new(0.0, 10.0, 11, 1.0, 10).unwrap();
        let m = point_mass(&grid, 4);
        let mut v = vec![0.0; grid.n_z];
        v[4] = 2.5;
        let slice = FieldSlice::new(&grid, &m, &v);
        let w = weights(1.0);
        assert_eq!(expected_flocking_cost(2.5, 7.0, &slice, &w).unwrap(), 0.0);
        // distance 0, kernel 1, unit relative velocity
        assert_relative_eq!(
            expected_flocking_cost(1.5, 4.0, &slice, &w).unwrap(),
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn expected_flocking_uniform_matches_direct_sum() {
        let grid = Grid::new(0.0, 300.0, 61, 1.0, 10).unwrap();
        let m = vec![1.0 / 300.0; grid.n_z];
        let vbar = 1.3;
        let v = vec![vbar; grid.n_z];
        let slice = FieldSlice::new(&grid, &m, &v);
        let w = weights(0.5);
        let (z, cand) = (120.0, -0.4);
        // brute-force trapezoid sum written out independently
        let mut direct = 0.0;
        for j in 0..61 {
            let zj = 5.0 * j as f64;
            let wt = if j == 0 || j == 60 { 2.5 } else { 5.0 };
            direct += wt / 300.0 * (vbar - cand).powi(2) / (2.0 + (zj - z).powi(2)).sqrt();
        }
        let got = expected_flocking_cost(cand, z, &slice, &w).unwrap();
        assert_relative_eq!(got, direct, max_relative = 1e-12);
        assert_relative_eq!(
            slice.moments(z, &w).flocking_cost(cand),
            direct,
            max_relative = 1e-12
        );
    }

    #[test]
    fn unnormalized_density_rejected() {
        let grid = Grid::new(0.0, 10.0, 11, 1.0, 10).unwrap();
        let m = vec![1.0; 11];
        let v = vec![0.0; 11];
        let slice = FieldSlice::new(&grid, &m, &v);
        assert!(expected_flocking_cost(0.0, 1.0, &slice, &weights(1.0)).is_err());
    }

    #[test]
    fn running_cost_weight_degeneracies() {
        let grid = Grid::new(0.0, 10.0, 11, 1.0, 10).unwrap();
        let m = point_mass(&grid, 5);
        let v = vec![2.0; 11];
        let slice = FieldSlice::new(&grid, &m, &v);
        let mut w = weights(1.0);
        w.w_energy = 0.0;
        assert_eq!(running_cost(2.0, 5.0, &slice, &w, 1e6, 0.2).unwrap(), 0.0);
        w.w_energy = 1.0;
        w.w_flock = 0.0;
        assert_relative_eq!(
            running_cost(1.0, 5.0, &slice, &w, 1e6, 0.2).unwrap(),
            energy_cost(1.0, 1e6, &w, 0.2).unwrap()
        );
        w.w_flock = 1.0;
        let sum = energy_cost(1.0, 1e6, &w, 0.2).unwrap()
            + expected_flocking_cost(1.0, 5.0, &slice, &w).unwrap();
        assert_relative_eq!(running_cost(1.0, 5.0, &slice, &w, 1e6, 0.2).unwrap(), sum);
        // dead link is clamped, not an error
        assert!(running_cost(1.0, 5.0, &slice, &w, 0.0, 0.2)
            .unwrap()
            .is_finite());
    }

    #[test]
    fn quadrature_equals_weighted_finite_sum_on_nodes() {
        // N agents parked on nodes i with empirical mass c_i / N; the
        // quadrature with m_i = c_i / (N w_i) reproduces the finite sum.
        let grid = Grid::new(0.0, 8.0, 9, 1.0, 10).unwrap();
        let nodes = [1usize, 1, 3, 4, 4, 4, 7];
        let n = nodes.len();
        let mut counts = vec![0.0; grid.n_z];
        for &i in &nodes {
            counts[i] += 1.0;
        }
        let m: Vec<f64> = (0..grid.n_z)
            .map(|i| counts[i] / (n as f64 * grid.weight(i)))
            .collect();
        let v: Vec<f64> = (0..grid.n_z).map(|i| 0.3 * i as f64 - 1.0).collect();
        let positions: Vec<f64> = nodes.iter().map(|&i| grid.z(i)).collect();
        let velocities: Vec<f64> = nodes.iter().map(|&i| v[i]).collect();
        let w = weights(2.0);
        let slice = FieldSlice::new(&grid, &m, &v);
        for a in 0..n {
            let finite = flocking_cost_finite(a, &positions, &velocities, &w).unwrap();
            let mf = expected_flocking_cost(velocities[a], positions[a], &slice, &w).unwrap();
            assert_relative_eq!(finite, mf, max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn flocking_galilean_invariant(
            zs in proptest::collection::vec(-50.0f64..50.0, 2..12),
            shift in -20.0f64..20.0,
            seed in 0u64..1000,
        ) {
            let vs: Vec<f64> = (0..zs.len()).map(|k| ((k as u64 * 7919 + seed) % 97) as f64 / 10.0 - 4.0).collect();
            let shifted: Vec<f64> = vs.iter().map(|v| v + shift).collect();
            let w = weights(3.0);
            for i in 0..zs.len() {
                let a = flocking_cost_finite(i, &zs, &vs, &w).unwrap();
                let b = flocking_cost_finite(i, &zs, &shifted, &w).unwrap();
                prop_assert!(a >= 0.0);
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
            }
        }

        #[test]
        fn kernel_positive_nonincreasing(d1 in 0.0f64..500.0, d2 in 0.0f64..500.0, gamma in 0.01f64..100.0, beta in 0.01f64..0.5) {
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let kn = kernel(near, gamma, beta).unwrap();
            let kf = kernel(far, gamma, beta).unwrap();
            prop_assert!(kf > 0.0 && kf <= kn);
        }
    }
}
