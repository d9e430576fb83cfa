use crate::cost::{CostWeights, FieldSlice, KernelMoments, RATE_FLOOR};
use crate::dynamics::WindModel;
use crate::grid::Grid;

/// Kernel values between grid nodes with the trapezoid weight of the source
/// node folded in, so node moments are plain dot products.
#[derive(Debug, Clone)]
pub struct KernelTable {
    n: usize,
    table: Vec<f64>,
}

impl KernelTable {
    pub fn new(grid: &Grid, weights: &CostWeights) -> Self {
        let n = grid.n_z;
        let mut table = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                table[i * n + j] =
                    grid.weight(j) * weights.kernel_at((grid.z(j) - grid.z(i)).abs());
            }
        }
        KernelTable { n, table }
    }

    pub fn moments(&self, i: usize, density: &[f64], velocity: &[f64]) -> KernelMoments {
        let row = &self.table[i * self.n..(i + 1) * self.n];
        let mut out = KernelMoments::default();
        for ((&k, &m), &v) in row.iter().zip(density).zip(velocity) {
            let w = k * m;
            out.mass += w;
            out.momentum += w * v;
            out.energy += w * v * v;
        }
        out
    }
}

/// Minimizer of the Hamiltonian bracket on `[-v_max, v_max]`:
///
/// ```text
/// v* = (2 w_f int m v K - dpsi/dz) / (a_m w_e / R + 2 w_f int m K)
/// ```
///
/// The bracket is convex in `v`, so clamping the stationary point gives the
/// constrained minimizer.
pub fn optimal_velocity_from_moments(
    psi_gradient: f64,
    moments: &KernelMoments,
    rate_at_z: f64,
    weights: &CostWeights,
    v_max: f64,
) -> f64 {
    let rate = rate_at_z.max(RATE_FLOOR);
    let denom = weights.mass * weights.w_energy / rate + 2.0 * weights.w_flock * moments.mass;
    let numer = 2.0 * weights.w_flock * moments.momentum - psi_gradient;
    if denom > 0.0 {
        return (numer / denom).clamp(-v_max, v_max);
    }
    // Zero curvature only when both weights vanish (or no mass is visible
    // and w_e = 0): the bracket is linear in v.
    assert!(
        denom == 0.0 && weights.w_energy * weights.mass == 0.0,
        "nonpositive curvature {denom}"
    );
    if psi_gradient > 0.0 {
        -v_max
    } else if psi_gradient < 0.0 {
        v_max
    } else {
        0.0
    }
}

/// Optimal velocity at an arbitrary position `z`, with the kernel integrals
/// taken by trapezoid quadrature over `field`.
pub fn optimal_velocity(
    psi_gradient: f64,
    z: f64,
    field: &FieldSlice<'_>,
    rate_at_z: f64,
    weights: &CostWeights,
    v_max: f64,
) -> f64 {
    let moments = field.moments(z, weights);
    optimal_velocity_from_moments(psi_gradient, &moments, rate_at_z, weights, v_max)
}

/// The `v`-dependent part of the HJB Hamiltonian,
/// `w_e E(v) + w_f F(v) + (v + A) dpsi/dz`.
pub fn hamiltonian_bracket(
    v: f64,
    psi_gradient: f64,
    moments: &KernelMoments,
    rate_at_z: f64,
    weights: &CostWeights,
    tx_power_w: f64,
    wind: &WindModel,
) -> f64 {
    let rate = rate_at_z.max(RATE_FLOOR);
    let energy = (0.5 * weights.mass * v * v + tx_power_w + weights.fixed_power) / rate;
    weights.w_energy * energy
        + weights.w_flock * moments.flocking_cost(v)
        + (v + wind.mean_velocity) * psi_gradient
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn weights(w_f: f64) -> CostWeights {
        CostWeights {
            w_energy: 1.0,
            w_flock: w_f,
            gamma: 10.0,
            beta: 0.5,
            mass: 1.0,
            fixed_power: 0.0,
        }
    }

    #[test]
    fn energy_only_control() {
        let w = weights(0.0);
        let m = KernelMoments {
            mass: 0.7,
            momentum: 0.3,
            energy: 1.0,
        };
        let v = optimal_velocity_from_moments(-2e-6, &m, 4e6, &w, 30.0);
        assert_relative_eq!(v, 2e-6 * 4e6 / 1.0, max_relative = 1e-12);
    }

    #[test]
    fn shrinkage_toward_field_velocity() {
        let grid = Grid::new(0.0, 20.0, 21, 1.0, 10).unwrap();
        let m = vec![1.0 / 20.0; 21];
        let vbar = 1.7;
        let v = vec![vbar; 21];
        let slice = FieldSlice::new(&grid, &m, &v);
        let w = weights(1.0);
        let rate = 2.0;
        let z = 6.0;
        let i_mk: f64 = (0..21)
            .map(|j| 2.0 * grid.weight(j) * m[j] * w.kernel_at((grid.z(j) - z).abs()))
            .sum();
        let expected = vbar * i_mk / (1.0 / rate + i_mk);
        assert_relative_eq!(
            optimal_velocity(0.0, z, &slice, rate, &w, 30.0),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn clamped_to_vmax() {
        let w = weights(0.0);
        let m = KernelMoments::default();
        assert_eq!(optimal_velocity_from_moments(-1.0, &m, 1e6, &w, 30.0), 30.0);
        assert_eq!(optimal_velocity_from_moments(1.0, &m, 1e6, &w, 30.0), -30.0);
    }

    #[test]
    fn zero_weights_zero_gradient_gives_zero() {
        let mut w = weights(0.0);
        w.w_energy = 0.0;
        assert_eq!(
            optimal_velocity_from_moments(0.0, &KernelMoments::default(), 1e6, &w, 30.0),
            0.0
        );
    }

    #[test]
    fn table_moments_match_slice_moments() {
        let grid = Grid::new(0.0, 30.0, 16, 1.0, 10).unwrap();
        let w = weights(1.0);
        let table = KernelTable::new(&grid, &w);
        let m: Vec<f64> = (0..16).map(|i| (i as f64 * 0.3).sin().abs()).collect();
        let v: Vec<f64> = (0..16).map(|i| i as f64 * 0.1 - 0.5).collect();
        let slice = FieldSlice::new(&grid, &m, &v);
        for i in 0..16 {
            let a = table.moments(i, &m, &v);
            let b = slice.moments(grid.z(i), &w);
            assert_relative_eq!(a.mass, b.mass, max_relative = 1e-13);
            assert_relative_eq!(
                a.momentum,
                b.momentum,
                max_relative = 1e-13,
                epsilon = 1e-15
            );
            assert_relative_eq!(a.energy, b.energy, max_relative = 1e-13);
        }
    }
}
