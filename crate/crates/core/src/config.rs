//! Scenario files.
//!
//! A scenario is a TOML document with one table per subsystem. Physical
//! parameters are required; numerical and run settings have defaults. The
//! loaded config is echoed with every default resolved, and that echo reloads
//! to an identical [`ScenarioConfig`]. See `docs/config.md` for the schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent_sim::{ControllerTag, FleetSetup, ReplaySpec};
use crate::channel::ChannelParams;
use crate::cost::CostWeights;
use crate::dynamics::WindModel;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::metrics::{SafetyParams, DEFAULT_FLOCKING_THRESHOLD};
use crate::solver::{gaussian_density, rate_field, Hotspot, MfgProblem, PicardSettings};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "MFGFLOCK_OUTPUT_ROOT";

/// Keys that have no default.
pub const REQUIRED_KEYS: &[&str] = &[
    "channel.carrier_freq_ghz",
    "channel.tx_power_dbm",
    "channel.noise_density_dbm_hz",
    "channel.bandwidth_hz",
    "channel.shadow_std_db",
    "channel.altitude_m",
    "cost.w_energy",
    "cost.w_flock",
    "cost.beta",
    "cost.mass",
    "cost.fixed_power",
    "wind.mean_velocity",
    "wind.volatility",
    "safety.safe_distance",
    "fleet.n_uav",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub carrier_freq_ghz: f64,
    pub tx_power_dbm: f64,
    pub noise_density_dbm_hz: f64,
    /// Total band; divided among UAVs when `split_bandwidth` is set.
    pub bandwidth_hz: f64,
    #[serde(default = "default_true")]
    pub split_bandwidth: bool,
    pub shadow_std_db: f64,
    pub altitude_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub w_energy: f64,
    pub w_flock: f64,
    /// Collision aversion factor for single solves (`oracle`).
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub beta: f64,
    pub mass: f64,
    pub fixed_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetySection {
    pub safe_distance: f64,
    #[serde(default = "default_epsilon")]
    pub target_collision_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub z_min: f64,
    #[serde(default = "default_z_max")]
    pub z_max: f64,
    #[serde(default = "default_n_z")]
    pub n_z: usize,
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    #[serde(default = "default_horizon")]
    pub horizon_s: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            z_min: 0.0,
            z_max: default_z_max(),
            n_z: default_n_z(),
            n_t: default_n_t(),
            horizon_s: default_horizon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetSection {
    pub n_uav: usize,
    /// Defaults to the middle of the flight line.
    #[serde(default)]
    pub hotspot_center: Option<f64>,
    #[serde(default = "default_hotspot_width")]
    pub hotspot_width: f64,
    #[serde(default = "default_init_mean")]
    pub init_mean: f64,
    /// Standard deviation (not variance) of the initial Gaussian.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default)]
    pub shadow_fading: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    /// Constant terminal cost `psi(., T)`.
    #[serde(default)]
    pub terminal_value: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            damping: default_damping(),
            tol: default_tol(),
            max_iters: default_max_iters(),
            v_max: default_v_max(),
            terminal_value: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub seed_start: u64,
    #[serde(default = "default_seed_count")]
    pub seed_count: u64,
    #[serde(default = "default_controllers")]
    pub controllers: Vec<ControllerTag>,
    #[serde(default = "default_flocking_threshold")]
    pub flocking_threshold: f64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            gammas: default_gammas(),
            seed_start: 0,
            seed_count: default_seed_count(),
            controllers: default_controllers(),
            flocking_threshold: default_flocking_threshold(),
            jobs: default_jobs(),
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub channel: ChannelSection,
    pub cost: CostSection,
    pub wind: WindModel,
    pub safety: SafetySection,
    #[serde(default)]
    pub grid: GridSection,
    pub fleet: FleetSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub run: RunSection,
}

fn default_true() -> bool {
    true
}
fn default_gamma() -> f64 {
    10.0
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_z_max() -> f64 {
    300.0
}
fn default_n_z() -> usize {
    128
}
fn default_n_t() -> usize {
    200
}
fn default_horizon() -> f64 {
    20.0
}
fn default_hotspot_width() -> f64 {
    60.0
}
fn default_init_mean() -> f64 {
    210.0
}
fn default_init_std() -> f64 {
    30f64.sqrt()
}
fn default_damping() -> f64 {
    PicardSettings::default().damping
}
fn default_tol() -> f64 {
    PicardSettings::default().tol
}
fn default_max_iters() -> usize {
    PicardSettings::default().max_iters
}
fn default_v_max() -> f64 {
    30.0
}
fn default_gammas() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}
fn default_seed_count() -> u64 {
    100
}
fn default_controllers() -> Vec<ControllerTag> {
    vec![ControllerTag::Mfg, ControllerTag::MfgWe0]
}
fn default_flocking_threshold() -> f64 {
    DEFAULT_FLOCKING_THRESHOLD
}
fn default_jobs() -> usize {
    1
}

fn missing_required(doc: &toml::Table) -> Vec<String> {
    REQUIRED_KEYS
        .iter()
        .filter(|path| {
            let (section, key) = path.split_once('.').expect("dotted key");
            !doc.get(section)
                .and_then(|s| s.as_table())
                .is_some_and(|t| t.contains_key(key))
        })
        .map(|p| p.to_string())
        .collect()
}

impl ScenarioConfig {
    /// Parses, resolves defaults and validates a scenario document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let missing = missing_required(&doc);
        if !missing.is_empty() {
            return Err(Error::MissingKeys(missing));
        }
        let mut config: ScenarioConfig =
            toml::from_str(text).map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        config.resolve_defaults();
        config.validate()?;
        Ok(config)
    }

    fn resolve_defaults(&mut self) {
        if self.fleet.hotspot_center.is_none() {
            self.fleet.hotspot_center = Some(0.5 * (self.grid.z_min + self.grid.z_max));
        }
    }

    /// Canonical TOML echo with every default filled in.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical echo, first 16 hex digits.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        if self.fleet.n_uav == 0 {
            return Err(Error::config("fleet.n_uav", "must be >= 1"));
        }
        if !(self.channel.bandwidth_hz > 0.0) {
            return Err(Error::config("channel.bandwidth_hz", "must be > 0"));
        }
        self.channel_params().validate()?;
        let w = self.weights(self.cost.gamma);
        w.validate()?;
        for (k, &g) in self.run.gammas.iter().enumerate() {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::config(
                    format!("run.gammas[{k}]"),
                    "must be finite and > 0",
                ));
            }
        }
        if self.run.gammas.is_empty() {
            return Err(Error::config("run.gammas", "must list at least one value"));
        }
        if self.run.controllers.is_empty() {
            return Err(Error::config(
                "run.controllers",
                "must list at least one controller",
            ));
        }
        if self.run.seed_count == 0 {
            return Err(Error::config("run.seed_count", "must be >= 1"));
        }
        if self.run.jobs == 0 {
            return Err(Error::config("run.jobs", "must be >= 1"));
        }
        if !(self.run.flocking_threshold > 0.0) {
            return Err(Error::config("run.flocking_threshold", "must be > 0"));
        }
        self.wind.validate()?;
        self.safety().validate()?;
        let grid = self.grid()?;
        let spot = self.hotspot();
        if !(spot.width >= 0.0) || spot.lo() < grid.z_min || spot.hi() > grid.z_max {
            return Err(Error::config(
                "fleet.hotspot_center",
                "user interval must lie inside the flight line",
            ));
        }
        if !(self.fleet.init_std > 0.0) {
            return Err(Error::config("fleet.init_std", "must be > 0"));
        }
        if !(grid.z_min..=grid.z_max).contains(&self.fleet.init_mean) {
            return Err(Error::config(
                "fleet.init_mean",
                "must lie inside the flight line",
            ));
        }
        let s = &self.solver;
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            return Err(Error::config(
                "solver.damping",
                "must satisfy 0 < damping <= 1",
            ));
        }
        if !(s.tol > 0.0) {
            return Err(Error::config("solver.tol", "must be > 0"));
        }
        if s.max_iters == 0 {
            return Err(Error::config("solver.max_iters", "must be >= 1"));
        }
        if !(s.v_max > 0.0) {
            return Err(Error::config("solver.v_max", "must be > 0"));
        }
        if !s.terminal_value.is_finite() {
            return Err(Error::config("solver.terminal_value", "must be finite"));
        }
        Ok(())
    }

    /// Channel with the per-user band resolved.
    pub fn channel_params(&self) -> ChannelParams {
        let c = &self.channel;
        let bandwidth_hz = if c.split_bandwidth {
            c.bandwidth_hz / self.fleet.n_uav.max(1) as f64
        } else {
            c.bandwidth_hz
        };
        ChannelParams {
            carrier_freq_ghz: c.carrier_freq_ghz,
            tx_power_dbm: c.tx_power_dbm,
            noise_density_dbm_hz: c.noise_density_dbm_hz,
            bandwidth_hz,
            shadow_std_db: c.shadow_std_db,
            altitude_m: c.altitude_m,
        }
    }

    pub fn weights(&self, gamma: f64) -> CostWeights {
        CostWeights {
            w_energy: self.cost.w_energy,
            w_flock: self.cost.w_flock,
            gamma,
            beta: self.cost.beta,
            mass: self.cost.mass,
            fixed_power: self.cost.fixed_power,
        }
    }

    pub fn safety(&self) -> SafetyParams {
        SafetyParams {
            safe_distance: self.safety.safe_distance,
            target_collision_prob: self.safety.target_collision_prob,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = &self.grid;
        Grid::new(g.z_min, g.z_max, g.n_z, g.horizon_s, g.n_t)
    }

    pub fn hotspot(&self) -> Hotspot {
        Hotspot {
            center: self
                .fleet
                .hotspot_center
                .unwrap_or(0.5 * (self.grid.z_min + self.grid.z_max)),
            width: self.fleet.hotspot_width,
        }
    }

    pub fn picard(&self) -> PicardSettings {
        PicardSettings {
            damping: self.solver.damping,
            tol: self.solver.tol,
            max_iters: self.solver.max_iters,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (self.run.seed_start..self.run.seed_start + self.run.seed_count).collect()
    }

    /// Mean-field problem for one `gamma`; `w_energy` overrides the
    /// configured energy weight (the `mfg_we0` baseline passes zero).
    pub fn mfg_problem(&self, gamma: f64, w_energy: Option<f64>) -> Result<MfgProblem> {
        let grid = self.grid()?;
        let channel = self.channel_params();
        let mut weights = self.weights(gamma);
        if let Some(w_e) = w_energy {
            weights.w_energy = w_e;
        }
        let rate = rate_field(&grid, &channel, &self.hotspot())?;
        let initial_density = gaussian_density(&grid, self.fleet.init_mean, self.fleet.init_std);
        Ok(MfgProblem {
            terminal: vec![self.solver.terminal_value; grid.n_z],
            tx_power_w: channel.tx_power_w(),
            rate,
            initial_density,
            weights,
            wind: self.wind,
            v_max: self.solver.v_max,
            picard: self.picard(),
            grid,
        })
    }

    pub fn replay_spec(&self, gamma: f64) -> Result<ReplaySpec> {
        let grid = self.grid()?;
        Ok(ReplaySpec {
            fleet: FleetSetup {
                n_uav: self.fleet.n_uav,
                init_mean: self.fleet.init_mean,
                init_std: self.fleet.init_std,
                hotspot: self.hotspot(),
                domain: grid.domain(),
            },
            grid,
            wind: self.wind,
            channel: self.channel_params(),
            weights: self.weights(gamma),
            v_max: self.solver.v_max,
            shadow_fading: self.fleet.shadow_fading,
        })
    }
}

/// Reads and validates a scenario file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[channel]
carrier_freq_ghz = 2.0
tx_power_dbm = 23.0
noise_density_dbm_hz = -173.0
bandwidth_hz = 20e6
shadow_std_db = 8.0
altitude_m = 300.0

[cost]
w_energy = 1.0
w_flock = 1.0
beta = 0.5
mass = 1.0
fixed_power = 0.0

[wind]
mean_velocity = -3.0
volatility = 0.1

[safety]
safe_distance = 2.5

[fleet]
n_uav = 100
"#;

    #[test]
    fn minimal_config_resolves_defaults() {
        let c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.grid.n_z, 128);
        assert_eq!(c.grid.n_t, 200);
        assert_eq!(c.grid.horizon_s, 20.0);
        assert_eq!(c.fleet.hotspot_center, Some(150.0));
        assert_eq!(c.channel_params().bandwidth_hz, 200e3);
        assert_eq!(c.solver.v_max, 30.0);
        assert_eq!(c.run.gammas, vec![0.1, 1.0, 10.0]);
        assert_eq!(c.seeds().len(), 100);
    }

    #[test]
    fn echo_round_trips() {
        let c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        let echo = c.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&echo).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.config_hash(), c.config_hash());
    }

    #[test]
    fn empty_file_lists_required_keys() {
        match ScenarioConfig::from_toml_str("") {
            Err(Error::MissingKeys(keys)) => assert_eq!(keys.len(), REQUIRED_KEYS.len()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn beta_above_half_rejected() {
        let text = MINIMAL.replace("beta = 0.5", "beta = 0.7");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(
            matches!(&err, Error::Config { key, .. } if key == "cost.beta"),
            "{err}"
        );
        assert!(err.to_string().contains("beta <= 0.5"));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace("[wind]", "[wind]\ngusts = 4.0");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("gusts"), "{err}");
    }

    #[test]
    fn altitude_outside_model_rejected() {
        let text = MINIMAL.replace("altitude_m = 300.0", "altitude_m = 500.0");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("channel.altitude_m"), "{err}");
    }
}
