//! Monte-Carlo replay of a finite fleet.
//!
//! Each UAV applies a velocity controller under the wind SDE and reports its
//! downlink rate to a dedicated ground user. Controllers:
//!
//! - `mfg`: the solved optimal velocity field, read at the UAV's own position.
//! - `mfg_we0`: the same pipeline solved with `w_e = 0` (flocking only).
//! - `cs_classic`: the Cucker-Smale consensus update, which needs every
//!   other UAV's state.
//!
//! A replay is a pure function of its inputs and seed.

use std::fmt;
use std::str::FromStr;

use log::warn;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{
    downlink_rate, expected_path_loss_linear, los_probability, loss_db_to_gain,
    path_loss_for_state, sample_link_state, ChannelParams, LinkGeometry,
};
use crate::cost::{energy_cost, CostWeights, RATE_FLOOR};
use crate::dynamics::{em_step, Domain, UavState, WindModel};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::solver::{Hotspot, MeanField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerTag {
    Mfg,
    MfgWe0,
    CsClassic,
}

impl ControllerTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerTag::Mfg => "mfg",
            ControllerTag::MfgWe0 => "mfg_we0",
            ControllerTag::CsClassic => "cs_classic",
        }
    }
}

impl fmt::Display for ControllerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mfg" => Ok(ControllerTag::Mfg),
            "mfg_we0" => Ok(ControllerTag::MfgWe0),
            "cs_classic" => Ok(ControllerTag::CsClassic),
            other => Err(Error::Parse(format!(
                "unknown controller tag `{other}` (expected mfg, mfg_we0 or cs_classic)"
            ))),
        }
    }
}

/// Initial fleet layout: UAVs from a Gaussian truncated to the domain, users
/// uniform on the hotspot interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FleetSetup {
    pub n_uav: usize,
    pub init_mean: f64,
    pub init_std: f64,
    pub hotspot: Hotspot,
    pub domain: Domain,
}

/// `pairing[uav]` is the index of the user served by that UAV.
#[derive(Debug, Clone, PartialEq)]
pub struct UserAssignment {
    pub user_positions: Vec<f64>,
    pub pairing: Vec<usize>,
}

impl UserAssignment {
    pub fn user_of(&self, uav: usize) -> f64 {
        self.user_positions[self.pairing[uav]]
    }

    pub fn is_bijection(&self) -> bool {
        let n = self.user_positions.len();
        let mut seen = vec![false; n];
        self.pairing.len() == n
            && self
                .pairing
                .iter()
                .all(|&u| u < n && !std::mem::replace(&mut seen[u], true))
    }
}

fn sorted_order(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    idx
}

/// Samples UAV positions and users and pairs them by rank: the k-th
/// leftmost UAV serves the k-th leftmost user.
pub fn init_fleet(setup: &FleetSetup, seed: u64) -> (Vec<UavState>, UserAssignment) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(setup.init_mean, setup.init_std).expect("finite std");
    let positions: Vec<f64> = (0..setup.n_uav)
        .map(|_| loop {
            let z = normal.sample(&mut rng);
            if setup.domain.contains(z) {
                break z;
            }
        })
        .collect();
    let users: Vec<f64> = (0..setup.n_uav)
        .map(|_| setup.hotspot.lo() + setup.hotspot.width * rng.random::<f64>())
        .collect();

    let uav_rank = sorted_order(&positions);
    let user_rank = sorted_order(&users);
    let mut pairing = vec![0; setup.n_uav];
    for (uav, user) in uav_rank.into_iter().zip(user_rank) {
        pairing[uav] = user;
    }
    let states = positions
        .into_iter()
        .map(|position| UavState {
            position,
            velocity: 0.0,
        })
        .collect();
    (
        states,
        UserAssignment {
            user_positions: users,
            pairing,
        },
    )
}

/// Bilinear interpolation of `v*(z, t)`, clamped to `[-v_max, v_max]`.
/// Queries off the grid are clamped to the nearest edge with a warning.
pub fn mfg_controller(z: f64, t: f64, field: &MeanField, grid: &Grid, v_max: f64) -> f64 {
    let fz = (z - grid.z_min) / grid.dz;
    let ft = t / grid.dt;
    let max_z = (grid.n_z - 1) as f64;
    let max_t = grid.n_t as f64;
    if !(0.0..=max_z).contains(&fz) || !(0.0..=max_t).contains(&ft) {
        warn!("controller query (z = {z}, t = {t}) outside the solved grid; clamping");
    }
    let fz = fz.clamp(0.0, max_z);
    let ft = ft.clamp(0.0, max_t);
    let (i0, k0) = (fz.floor() as usize, ft.floor() as usize);
    let (i1, k1) = ((i0 + 1).min(grid.n_z - 1), (k0 + 1).min(grid.n_t));
    let (a, b) = (fz - i0 as f64, ft - k0 as f64);
    let v = &field.velocity;
    let lower = (1.0 - a) * v[[k0, i0]] + a * v[[k0, i1]];
    let upper = (1.0 - a) * v[[k1, i0]] + a * v[[k1, i1]];
    ((1.0 - b) * lower + b * upper).clamp(-v_max, v_max)
}

/// Classical Cucker-Smale update of UAV `i`:
/// `v_i + dt (1/N) sum_j K(|z_j - z_i|) (v_j - v_i)`.
pub fn cs_controller(
    i: usize,
    positions: &[f64],
    velocities: &[f64],
    dt: f64,
    weights: &CostWeights,
) -> f64 {
    let n = positions.len();
    let (zi, vi) = (positions[i], velocities[i]);
    let pull: f64 = positions
        .iter()
        .zip(velocities)
        .map(|(&zj, &vj)| weights.kernel_at((zj - zi).abs()) * (vj - vi))
        .sum();
    vi + dt * pull / n as f64
}

/// Time series of one replay; matrices are `N x (n_t + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetTrajectory {
    pub times: Vec<f64>,
    pub positions: Array2<f64>,
    pub velocities: Array2<f64>,
    pub rates: Array2<f64>,
    pub energy_per_rate: Array2<f64>,
    pub seed: u64,
    pub controller_tag: ControllerTag,
    pub shadow_fading: bool,
}

impl FleetTrajectory {
    pub fn n_uav(&self) -> usize {
        self.positions.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.positions.ncols()
    }

    pub fn positions_at(&self, k: usize) -> Vec<f64> {
        self.positions.column(k).to_vec()
    }

    pub fn velocities_at(&self, k: usize) -> Vec<f64> {
        self.velocities.column(k).to_vec()
    }
}

/// Fixed inputs of a replay.
#[derive(Debug, Clone)]
pub struct ReplaySpec {
    pub grid: Grid,
    pub wind: WindModel,
    pub channel: ChannelParams,
    /// Energy terms and, for `cs_classic`, the interaction kernel.
    pub weights: CostWeights,
    pub fleet: FleetSetup,
    pub v_max: f64,
    /// Sample LOS/NLOS states and log-normal shadowing per step instead of
    /// using the expected gain.
    pub shadow_fading: bool,
}

pub enum Controller<'a> {
    /// Reads a solved field; the tag records which solve produced it.
    MeanField {
        field: &'a MeanField,
        tag: ControllerTag,
    },
    CuckerSmale,
}

impl Controller<'_> {
    pub fn tag(&self) -> ControllerTag {
        match self {
            Controller::MeanField { tag, .. } => *tag,
            Controller::CuckerSmale => ControllerTag::CsClassic,
        }
    }
}

fn link_rate(spec: &ReplaySpec, z: f64, user: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let ch = &spec.channel;
    let geom = LinkGeometry::from_offset(z - user, ch.altitude_m);
    let gain = if spec.shadow_fading {
        let p_los = los_probability(ch.altitude_m, geom.d2d_m)?;
        let state = sample_link_state(p_los, rng.random::<f64>());
        let shadow: f64 = rng.sample::<f64, _>(StandardNormal) * ch.shadow_std_db;
        loss_db_to_gain(
            path_loss_for_state(state, ch.altitude_m, geom.d3d_m, ch.carrier_freq_ghz)? + shadow,
        )
    } else {
        expected_path_loss_linear(ch.altitude_m, geom.d3d_m, ch.carrier_freq_ghz)?
    };
    Ok(downlink_rate(gain, ch, 1.0))
}

/// Steps all UAVs with Euler-Maruyama under the chosen controller. The
/// command is held over each step; every record at `t_k` is taken before
/// the move. Fleet layout, wind noise and channel draws use separate
/// streams of one seeded generator.
pub fn run_replay(
    spec: &ReplaySpec,
    controller: &Controller<'_>,
    seed: u64,
) -> Result<FleetTrajectory> {
    let grid = &spec.grid;
    let n = spec.fleet.n_uav;
    if n == 0 {
        return Err(Error::config("fleet.n_uav", "must be >= 1"));
    }
    if let Controller::MeanField { field, .. } = controller {
        if field.velocity.dim() != (grid.n_t + 1, grid.n_z) {
            return Err(Error::Domain(
                "solved field does not match the replay grid".into(),
            ));
        }
    }
    let steps = grid.n_t + 1;
    let (mut states, users) = init_fleet(&spec.fleet, seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    let mut channel_rng = ChaCha8Rng::seed_from_u64(seed);
    channel_rng.set_stream(2);

    let mut out = FleetTrajectory {
        times: grid.times(),
        positions: Array2::zeros((n, steps)),
        velocities: Array2::zeros((n, steps)),
        rates: Array2::zeros((n, steps)),
        energy_per_rate: Array2::zeros((n, steps)),
        seed,
        controller_tag: controller.tag(),
        shadow_fading: spec.shadow_fading,
    };
    let tx_power_w = spec.channel.tx_power_w();
    let domain = grid.domain();
    let mut positions = vec![0.0; n];
    let mut velocities = vec![0.0; n];

    for k in 0..steps {
        let t = grid.t(k);
        for (p, s) in positions.iter_mut().zip(&states) {
            *p = s.position;
        }
        match controller {
            Controller::MeanField { field, .. } => {
                for (v, s) in velocities.iter_mut().zip(&states) {
                    *v = mfg_controller(s.position, t, field, grid, spec.v_max);
                }
            }
            Controller::CuckerSmale => {
                // The recorded t = 0 command is the initial velocity itself.
                if k > 0 {
                    let prev: Vec<f64> = states.iter().map(|s| s.velocity).collect();
                    for (i, v) in velocities.iter_mut().enumerate() {
                        *v = cs_controller(i, &positions, &prev, grid.dt, &spec.weights);
                    }
                } else {
                    for (v, s) in velocities.iter_mut().zip(&states) {
                        *v = s.velocity;
                    }
                }
            }
        }
        for i in 0..n {
            states[i].velocity = velocities[i];
            let rate = link_rate(spec, positions[i], users.user_of(i), &mut channel_rng)?;
            out.positions[[i, k]] = positions[i];
            out.velocities[[i, k]] = velocities[i];
            out.rates[[i, k]] = rate;
            out.energy_per_rate[[i, k]] = energy_cost(
                velocities[i],
                rate.max(RATE_FLOOR),
                &spec.weights,
                tx_power_w,
            )?;
        }
        if k + 1 < steps {
            for s in states.iter_mut() {
                let noise: f64 = noise_rng.sample(StandardNormal);
                *s = em_step(*s, &spec.wind, grid.dt, noise, &domain)?;
            }
        }
    }
    Ok(out)
}
