//! Solve, replay and measure a scenario, writing every artifact to one run
//! directory.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.toml                      resolved config echo
//! summary.json                     per-(gamma, tag) metrics and solve status
//! collision_fraction.csv           t, ensemble mean and first-seed columns
//! energy_per_rate.csv              same layout
//! heatmap_<gamma>.csv              FPK density of the mfg solve (rows = time)
//! solve_<tag>_g<gamma>/            density.csv, velocity.csv, value.csv, report.json
//! replay_<tag>_g<gamma>/           heatmap.csv, trajectory_seed<s>.csv, trajectory_seed<s>.json
//! ```

use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::agent_sim::{run_replay, Controller, ControllerTag, FleetTrajectory, ReplaySpec};
use crate::config::{ScenarioConfig, OUTPUT_ROOT_ENV};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::{write_json, write_matrix_csv, write_series_csv, write_text, write_trajectory_csv};
use crate::metrics::{
    collision_fraction_series, density_heatmap, energy_per_rate_series, ensemble_mean,
    final_quartile_mean, flocking_time, l1_distance, mean, settle_time, spreading_onset,
    trajectory_heatmap, velocity_spread_series, COLLISION_FREE_LEVEL,
};
use crate::solver::oracle::{
    fpk_diffusion_oracle, fpk_translation_oracle, hamiltonian_oracle, OracleCheck, LATTICE_POINTS,
};
use crate::solver::{picard_solve, MfgSolution, SolveReport};

/// Interquartile widening that counts as the fleet spreading out.
pub const SPREADING_FACTOR: f64 = 2.0;

/// Minimum fraction of nodes where the closed-form control must match the
/// lattice argmin.
pub const HAMILTONIAN_MATCH_FRACTION: f64 = 0.95;

const MASS_TOL: f64 = 1e-6;
const NEGATIVITY_FLOOR: f64 = -1e-12;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub gammas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub strict: bool,
    pub out_dir: PathBuf,
}

impl RunOptions {
    /// Options taken from the config. The output directory falls back to
    /// `$MFGFLOCK_OUTPUT_ROOT/<config hash>`, then `runs/<config hash>`.
    pub fn from_config(config: &ScenarioConfig) -> Self {
        let out_dir = config.run.output_dir.clone().unwrap_or_else(|| {
            let root = std::env::var_os(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"));
            root.join(config.config_hash())
        });
        RunOptions {
            gammas: config.run.gammas.clone(),
            seeds: config.seeds(),
            jobs: config.run.jobs,
            strict: false,
            out_dir,
        }
    }
}

/// Ensemble statistics of one controller at one `gamma`.
#[derive(Debug, Clone, Serialize)]
pub struct TagSummary {
    pub gamma: f64,
    pub controller: ControllerTag,
    /// Time average of the ensemble-mean energy per rate (J/bit).
    pub time_avg_energy_per_rate: f64,
    /// Mean over the final quarter of the records (J/bit).
    pub steady_state_energy_per_rate: f64,
    /// Ensemble mean of the per-run time-averaged collision fraction.
    pub empirical_collision_probability: f64,
    pub target_collision_prob: f64,
    pub meets_collision_target: bool,
    /// First time the ensemble-mean collision fraction stays at or below
    /// the collision-free level until T.
    pub collision_free_onset_s: Option<f64>,
    pub collision_free_onset_first_seed_s: Option<f64>,
    pub flocking_time_s: Option<f64>,
    pub replay_spreading_onset_s: Option<f64>,
    /// Largest L1 distance between the FPK density and the pooled replay
    /// histogram over all output times; absent for controllers without a
    /// solved field.
    pub max_l1_to_fpk: Option<f64>,
    pub solve: Option<SolveReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaSummary {
    pub gamma: f64,
    pub fpk_spreading_onset_s: Option<f64>,
    /// `100 (EPR_we0 - EPR_mfg) / EPR_we0` on time averages, when both ran.
    pub energy_saving_percent: Option<f64>,
    pub tags: Vec<TagSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub n_uav: usize,
    pub horizon_s: f64,
    pub n_z: usize,
    pub n_t: usize,
    pub v_max: f64,
    pub init_mean: f64,
    pub init_std: f64,
    pub init_std_interpretation: &'static str,
    pub shadow_fading: bool,
    pub flocking_threshold: f64,
    pub collision_free_level: f64,
    pub all_converged: bool,
    pub gammas: Vec<GammaSummary>,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub summary: RunSummary,
    pub out_dir: PathBuf,
}

impl PipelineOutcome {
    /// Process exit status: 2 when a solve did not converge under `strict`.
    pub fn exit_code(&self, strict: bool) -> i32 {
        if strict && !self.summary.all_converged {
            2
        } else {
            0
        }
    }
}

/// Per-run series reduced on the fly so the ensemble never holds every
/// trajectory at once.
struct SeedMetrics {
    collision: Vec<f64>,
    energy_per_rate: Vec<f64>,
    velocity_spread: Vec<f64>,
    heatmap: Array2<f64>,
    collision_probability: f64,
}

fn seed_metrics(traj: &FleetTrajectory, grid: &Grid, safe_distance: f64) -> SeedMetrics {
    let collision = collision_fraction_series(traj, safe_distance);
    SeedMetrics {
        collision_probability: mean(&collision),
        collision,
        energy_per_rate: energy_per_rate_series(traj),
        velocity_spread: velocity_spread_series(traj),
        heatmap: trajectory_heatmap(&[traj], grid),
    }
}

struct Ensemble {
    collision: Vec<f64>,
    energy_per_rate: Vec<f64>,
    velocity_spread: Vec<f64>,
    heatmap: Array2<f64>,
    collision_probability: f64,
    first: FleetTrajectory,
}

fn run_ensemble(
    spec: &ReplaySpec,
    controller: &Controller<'_>,
    seeds: &[u64],
    safe_distance: f64,
) -> Result<Ensemble> {
    let first = run_replay(spec, controller, seeds[0])?;
    let rest: Vec<SeedMetrics> = seeds[1..]
        .par_iter()
        .map(|&s| {
            run_replay(spec, controller, s).map(|t| seed_metrics(&t, &spec.grid, safe_distance))
        })
        .collect::<Result<_>>()?;
    let mut all = vec![seed_metrics(&first, &spec.grid, safe_distance)];
    all.extend(rest);

    let collect = |f: fn(&SeedMetrics) -> &Vec<f64>| {
        ensemble_mean(&all.iter().map(|m| f(m).clone()).collect::<Vec<_>>())
    };
    let mut heatmap = Array2::<f64>::zeros(all[0].heatmap.dim());
    for m in &all {
        heatmap += &m.heatmap;
    }
    heatmap /= all.len() as f64;
    Ok(Ensemble {
        collision: collect(|m| &m.collision),
        energy_per_rate: collect(|m| &m.energy_per_rate),
        velocity_spread: collect(|m| &m.velocity_spread),
        collision_probability: mean(
            &all.iter()
                .map(|m| m.collision_probability)
                .collect::<Vec<_>>(),
        ),
        heatmap,
        first,
    })
}

fn gamma_label(gamma: f64) -> String {
    format!("{gamma}")
}

fn solve_tag(
    config: &ScenarioConfig,
    gamma: f64,
    tag: ControllerTag,
) -> Result<Option<MfgSolution>> {
    let w_energy = match tag {
        ControllerTag::Mfg => None,
        ControllerTag::MfgWe0 => Some(0.0),
        ControllerTag::CsClassic => return Ok(None),
    };
    let problem = config.mfg_problem(gamma, w_energy)?;
    let solution = picard_solve(&problem)?;
    if !solution.report.converged {
        warn!(
            "{tag} solve at gamma = {gamma} stopped after {} iterations with residual {:e}",
            solution.report.picard_iterations, solution.report.final_residual
        );
    }
    Ok(Some(solution))
}

fn write_solution(dir: &Path, solution: &MfgSolution) -> Result<()> {
    write_matrix_csv(&dir.join("density.csv"), &solution.field.density)?;
    write_matrix_csv(&dir.join("velocity.csv"), &solution.field.velocity)?;
    write_matrix_csv(&dir.join("value.csv"), &solution.value.values)?;
    write_json(&dir.join("report.json"), &solution.report)
}

#[derive(Serialize)]
struct TrajectoryMeta<'a> {
    seed: u64,
    controller_tag: ControllerTag,
    gamma: f64,
    config_hash: &'a str,
    shadow_fading: bool,
    seeds: &'a [u64],
}

/// Runs every `(gamma, controller)` pair of the config and writes the run
/// directory. Non-convergence is recorded in the summary, not raised.
pub fn run_pipeline(config: &ScenarioConfig, options: &RunOptions) -> Result<PipelineOutcome> {
    config.validate()?;
    if options.seeds.is_empty() {
        return Err(Error::config("run.seed_count", "must be >= 1"));
    }
    if options.gammas.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(Error::config("run.gammas", "must be finite and > 0"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.max(1))
        .build()
        .map_err(|e| Error::Scheme(format!("thread pool: {e}")))?;
    pool.install(|| run_pipeline_inner(config, options))
}

fn run_pipeline_inner(config: &ScenarioConfig, options: &RunOptions) -> Result<PipelineOutcome> {
    let out = &options.out_dir;
    let hash = config.config_hash();
    let grid = config.grid()?;
    let times = grid.times();
    let safety = config.safety();
    let tags = &config.run.controllers;
    write_text(&out.join("config.toml"), &config.to_toml_string())?;
    info!("run directory {} (config {hash})", out.display());

    let jobs: Vec<(f64, ControllerTag)> = options
        .gammas
        .iter()
        .flat_map(|&g| tags.iter().map(move |&t| (g, t)))
        .collect();
    let solutions: Vec<Option<MfgSolution>> = jobs
        .par_iter()
        .map(|&(g, t)| solve_tag(config, g, t))
        .collect::<Result<_>>()?;

    let mut collision_cols = Vec::new();
    let mut epr_cols = Vec::new();
    let mut gamma_summaries = Vec::new();
    let mut all_converged = true;

    for (gi, &gamma) in options.gammas.iter().enumerate() {
        let label = gamma_label(gamma);
        let spec = config.replay_spec(gamma)?;
        let mut tag_summaries = Vec::new();
        let mut fpk_onset = None;

        for (ti, &tag) in tags.iter().enumerate() {
            let solution = &solutions[gi * tags.len() + ti];
            if let Some(sol) = solution {
                all_converged &= sol.report.converged;
                write_solution(&out.join(format!("solve_{tag}_g{label}")), sol)?;
                if tag == ControllerTag::Mfg {
                    let heat = density_heatmap(&sol.field);
                    fpk_onset = spreading_onset(&grid, &heat, SPREADING_FACTOR);
                    write_matrix_csv(&out.join(format!("heatmap_{label}.csv")), &heat)?;
                }
            }
            let controller = match solution {
                Some(sol) => Controller::MeanField {
                    field: &sol.field,
                    tag,
                },
                None => Controller::CuckerSmale,
            };
            let ens = run_ensemble(&spec, &controller, &options.seeds, safety.safe_distance)?;

            let replay_dir = out.join(format!("replay_{tag}_g{label}"));
            write_matrix_csv(&replay_dir.join("heatmap.csv"), &ens.heatmap)?;
            let seed = ens.first.seed;
            write_trajectory_csv(
                &replay_dir.join(format!("trajectory_seed{seed}.csv")),
                &ens.first,
            )?;
            write_json(
                &replay_dir.join(format!("trajectory_seed{seed}.json")),
                &TrajectoryMeta {
                    seed,
                    controller_tag: tag,
                    gamma,
                    config_hash: &hash,
                    shadow_fading: ens.first.shadow_fading,
                    seeds: &options.seeds,
                },
            )?;

            let first_collision = collision_fraction_series(&ens.first, safety.safe_distance);
            let first_epr = energy_per_rate_series(&ens.first);
            let max_l1 = solution.as_ref().map(|sol| {
                (0..times.len())
                    .map(|k| {
                        l1_distance(
                            &grid,
                            sol.field
                                .density
                                .row(k)
                                .as_slice()
                                .expect("standard layout"),
                            ens.heatmap.row(k).as_slice().expect("standard layout"),
                        )
                    })
                    .fold(0.0, f64::max)
            });
            tag_summaries.push(TagSummary {
                gamma,
                controller: tag,
                time_avg_energy_per_rate: mean(&ens.energy_per_rate),
                steady_state_energy_per_rate: final_quartile_mean(&ens.energy_per_rate),
                empirical_collision_probability: ens.collision_probability,
                target_collision_prob: safety.target_collision_prob,
                meets_collision_target: ens.collision_probability <= safety.target_collision_prob,
                collision_free_onset_s: settle_time(&times, &ens.collision, COLLISION_FREE_LEVEL),
                collision_free_onset_first_seed_s: settle_time(
                    &times,
                    &first_collision,
                    COLLISION_FREE_LEVEL,
                ),
                flocking_time_s: flocking_time(
                    &times,
                    &ens.velocity_spread,
                    config.run.flocking_threshold,
                ),
                replay_spreading_onset_s: spreading_onset(&grid, &ens.heatmap, SPREADING_FACTOR),
                max_l1_to_fpk: max_l1,
                solve: solution.as_ref().map(|s| s.report.clone()),
            });

            let col = format!("{tag}_g{label}");
            collision_cols.push((format!("{col}_mean"), ens.collision));
            collision_cols.push((format!("{col}_seed{seed}"), first_collision));
            epr_cols.push((format!("{col}_mean"), ens.energy_per_rate));
            epr_cols.push((format!("{col}_seed{seed}"), first_epr));
        }

        let epr_of = |t: ControllerTag| {
            tag_summaries
                .iter()
                .find(|s| s.controller == t)
                .map(|s| s.time_avg_energy_per_rate)
        };
        let saving = match (epr_of(ControllerTag::Mfg), epr_of(ControllerTag::MfgWe0)) {
            (Some(mfg), Some(base)) if base > 0.0 => Some(100.0 * (base - mfg) / base),
            _ => None,
        };
        gamma_summaries.push(GammaSummary {
            gamma,
            fpk_spreading_onset_s: fpk_onset,
            energy_saving_percent: saving,
            tags: tag_summaries,
        });
    }

    write_series_csv(&out.join("collision_fraction.csv"), &times, &collision_cols)?;
    write_series_csv(&out.join("energy_per_rate.csv"), &times, &epr_cols)?;

    let summary = RunSummary {
        config_hash: hash,
        seeds: options.seeds.clone(),
        n_uav: config.fleet.n_uav,
        horizon_s: grid.t_horizon,
        n_z: grid.n_z,
        n_t: grid.n_t,
        v_max: config.solver.v_max,
        init_mean: config.fleet.init_mean,
        init_std: config.fleet.init_std,
        init_std_interpretation: "standard deviation",
        shadow_fading: config.fleet.shadow_fading,
        flocking_threshold: config.run.flocking_threshold,
        collision_free_level: COLLISION_FREE_LEVEL,
        all_converged,
        gammas: gamma_summaries,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(PipelineOutcome {
        summary,
        out_dir: out.clone(),
    })
}

/// Solves the configured `gamma` once and runs the independent checks:
/// convergence, mass and positivity, the Hamiltonian lattice search, and the
/// two FPK moment laws.
pub fn run_oracles(config: &ScenarioConfig) -> Result<Vec<OracleCheck>> {
    config.validate()?;
    let problem = config.mfg_problem(config.cost.gamma, None)?;
    let solution = picard_solve(&problem)?;
    let grid = &problem.grid;
    let report = &solution.report;

    let mut checks = vec![OracleCheck {
        name: "picard_convergence".into(),
        passed: report.converged,
        detail: format!(
            "{} iterations, final residual {:.3e} (tol {:.1e})",
            report.picard_iterations, report.final_residual, report.tolerance
        ),
    }];
    let mass = solution.field.max_mass_error(grid);
    let min_m = solution.field.min_density();
    checks.push(OracleCheck {
        name: "fpk_mass_positivity".into(),
        passed: mass <= MASS_TOL && min_m >= NEGATIVITY_FLOOR,
        detail: format!("max |mass - 1| = {mass:.3e}, min m = {min_m:.3e}"),
    });
    let ham = hamiltonian_oracle(&problem, &solution, LATTICE_POINTS);
    checks.push(OracleCheck {
        name: "hamiltonian_argmin".into(),
        passed: ham.fraction() >= HAMILTONIAN_MATCH_FRACTION,
        detail: format!(
            "{}/{} nodes within one lattice step ({:.4} m/s), worst gap {:.3e}",
            ham.matched, ham.nodes, ham.lattice_step, ham.worst_gap
        ),
    });
    checks.push(fpk_translation_oracle(
        grid,
        &config.wind,
        config.fleet.init_mean,
        config.fleet.init_std,
    )?);
    checks.push(fpk_diffusion_oracle(
        grid,
        &config.wind,
        config.fleet.init_mean,
        config.fleet.init_std,
    )?);
    Ok(checks)
}
