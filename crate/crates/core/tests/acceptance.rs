//! Exit criteria for the desk-scale scenario in `configs/urban_micro.toml`.
//!
//! Each test prints one `PASS`/`FAIL` line to stderr (bypassing libtest
//! capture) and then asserts. The expensive sweep (three `gamma` values,
//! two controllers, 100 seeds) runs once and is shared.

use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;

use mfgflock_core::agent_sim::ControllerTag;
use mfgflock_core::channel::{los_probability, path_loss_los, path_loss_nlos};
use mfgflock_core::config::{load_config, ScenarioConfig};
use mfgflock_core::dynamics::{em_step, Domain, UavState, WindModel};
use mfgflock_core::metrics::COLLISION_FREE_LEVEL;
use mfgflock_core::pipeline::{run_pipeline, GammaSummary, RunOptions, RunSummary, TagSummary};
use mfgflock_core::solver::oracle::{hamiltonian_oracle, LATTICE_POINTS};
use mfgflock_core::solver::picard_solve;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GAMMAS: [f64; 3] = [0.1, 1.0, 10.0];
const SEEDS: u64 = 100;

fn report(id: u32, name: &str, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr().lock(),
        "[acceptance] {verdict} criterion {id} ({name}): {detail}"
    );
}

fn config() -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/urban_micro.toml");
    load_config(&path).expect("shipped scenario loads")
}

struct Sweep {
    summary: RunSummary,
    _dir: tempfile::TempDir,
}

fn sweep() -> &'static RunSummary {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    &SWEEP
        .get_or_init(|| {
            let config = config();
            let dir = tempfile::tempdir().unwrap();
            let options = RunOptions {
                gammas: GAMMAS.to_vec(),
                seeds: (0..SEEDS).collect(),
                jobs: 1,
                strict: false,
                out_dir: dir.path().to_path_buf(),
            };
            let outcome = run_pipeline(&config, &options).expect("pipeline runs");
            Sweep {
                summary: outcome.summary,
                _dir: dir,
            }
        })
        .summary
}

fn per_gamma(summary: &RunSummary, gamma: f64) -> &GammaSummary {
    summary
        .gammas
        .iter()
        .find(|g| g.gamma == gamma)
        .expect("gamma in sweep")
}

fn tag(summary: &RunSummary, gamma: f64, tag: ControllerTag) -> &TagSummary {
    per_gamma(summary, gamma)
        .tags
        .iter()
        .find(|t| t.controller == tag)
        .expect("controller in sweep")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("none".into(), |v| format!("{v:.2} s"))
}

#[test]
fn criterion_01_channel_vectors() {
    // Hand-computed reference values.
    let cases = [
        (
            "L_LOS(300, 300, 2)",
            path_loss_los(300.0, 300.0, 2.0).unwrap(),
            88.968483,
            0.01,
        ),
        (
            "L_LOS(100, 100, 2)",
            path_loss_los(100.0, 100.0, 2.0).unwrap(),
            79.420600,
            0.01,
        ),
        (
            "L_NLOS(100, 400, 2)",
            path_loss_nlos(100.0, 400.0, 2.0).unwrap(),
            111.278280,
            0.01,
        ),
        (
            "L_NLOS(300, 300, 2)",
            path_loss_nlos(300.0, 300.0, 2.0).unwrap(),
            98.797652,
            0.01,
        ),
        (
            "P_LOS(100, 400)",
            los_probability(100.0, 400.0).unwrap(),
            0.647822357,
            1e-4,
        ),
        (
            "P_LOS(300, 0)",
            los_probability(300.0, 0.0).unwrap(),
            1.0,
            1e-4,
        ),
    ];
    let worst = cases
        .iter()
        .map(|(_, got, want, tol)| (got - want).abs() / tol)
        .fold(0.0, f64::max);
    let passed = worst <= 1.0;
    let detail = cases
        .iter()
        .map(|(name, got, _, _)| format!("{name} = {got:.6}"))
        .collect::<Vec<_>>()
        .join(", ");
    report(1, "channel formulas", passed, &detail);
    assert!(passed, "{detail}");
}

#[test]
fn criterion_02_fpk_conservation() {
    let s = sweep();
    let mut worst_mass: f64 = 0.0;
    let mut worst_min = f64::INFINITY;
    for g in GAMMAS {
        let r = tag(s, g, ControllerTag::Mfg).solve.as_ref().unwrap();
        worst_mass = worst_mass.max(r.max_mass_error);
        worst_min = worst_min.min(r.min_density);
    }
    let passed = worst_mass <= 1e-6 && worst_min >= -1e-12;
    let detail =
        format!("max |mass - 1| = {worst_mass:.3e} (<= 1e-6), min m = {worst_min:.3e} (>= -1e-12)");
    report(2, "FPK conservation", passed, &detail);
    assert!(passed, "{detail}");
}

#[test]
fn criterion_03_hamiltonian_oracle() {
    let config = config();
    let mut fractions = Vec::new();
    for g in GAMMAS {
        let problem = config.mfg_problem(g, None).unwrap();
        let solution = picard_solve(&problem).unwrap();
        let check = hamiltonian_oracle(&problem, &solution, LATTICE_POINTS);
        fractions.push((g, check.fraction(), check.worst_gap));
    }
    let passed = fractions.iter().all(|(_, f, _)| *f >= 0.95);
    let detail = fractions
        .iter()
        .map(|(g, f, gap)| format!("gamma {g}: {:.2}% matched, worst gap {gap:.2e}", 100.0 * f))
        .collect::<Vec<_>>()
        .join("; ");
    report(3, "Hamiltonian argmin", passed, &detail);
    assert!(passed, "{detail}");
}

#[test]
fn criterion_04_picard_convergence() {
    let s = sweep();
    let mut parts = Vec::new();
    let mut passed = true;
    for g in GAMMAS {
        let r = tag(s, g, ControllerTag::Mfg).solve.as_ref().unwrap();
        passed &= r.converged && r.final_residual <= 1e-4 && r.picard_iterations <= 50;
        parts.push(format!(
            "gamma {g}: {} iterations, residual {:.2e}",
            r.picard_iterations, r.final_residual
        ));
    }
    let detail = parts.join("; ");
    report(4, "Picard convergence", passed, &detail);
    assert!(passed, "{detail}");
}

#[test]
fn criterion_05_collision_free_regime() {
    let s = sweep();
    let onsets: Vec<Option<f64>> = GAMMAS
        .iter()
        .map(|&g| tag(s, g, ControllerTag::Mfg).collision_free_onset_s)
        .collect();
    let horizon = s.horizon_s;
    let reached = matches!(onsets[2], Some(t) if t < horizon);
    let decreasing = onsets
        .windows(2)
        .all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b < a));
    let passed = reached && decreasing;
    let probs: Vec<String> = GAMMAS
        .iter()
        .map(|&g| {
            format!(
                "{:.4}",
                tag(s, g, ControllerTag::Mfg).empirical_collision_probability
            )
        })
        .collect();
    let detail = format!(
        "collision-free (<= {COLLISION_FREE_LEVEL}) onset for gamma 0.1/1/10 = {}/{}/{}; time-averaged fraction {}",
        fmt_opt(onsets[0]),
        fmt_opt(onsets[1]),
        fmt_opt(onsets[2]),
        probs.join("/")
    );
    report(5, "collision-free regime", passed, &detail);
    assert!(passed, "{detail}");
}

#[test]
fn criterion_06_energy_saving() {
    let s = sweep();
    let g = per_gamma(s, 10.0);
    let mfg = tag(s, 10.0, ControllerTag::Mfg).time_avg_energy_per_rate;
    let base = tag(s, 10.0, ControllerTag::MfgWe0).time_avg_energy_per_rate;
    let saving = g.energy_saving_percent.unwrap();
    let passed = mfg < base && saving >= 30.0;
    let detail = format!(
        "EPR mfg = {mfg:.6e} J/bit, mfg_we0 = {base:.6e} J/bit, saving = {saving:.4}% (>= 30%)"
    );
    report(6, "energy saving at gamma 10", passed, &detail);
    assert!(passed, "{detail}");
}

#[test]
fn criterion_07_spreading_onset() {
    let s = sweep();
    let onsets: Vec<Option<f64>> = GAMMAS
        .iter()
        .map(|&g| per_gamma(s, g).fpk_spreading_onset_s)
        .collect();
    let passed = onsets
        .windows(2)
        .all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b < a));
    let detail = format!(
        "interquartile width > 2x initial at gamma 0.1/1/10 = {}/{}/{}",
        fmt_opt(onsets[0]),
        fmt_opt(onsets[1]),
        fmt_opt(onsets[2])
    );
    report(7, "spreading onset", passed, &detail);
    assert!(passed, "{detail}");
}

#[test]
fn criterion_08_mean_field_consistency() {
    let s = sweep();
    let l1: Vec<f64> = GAMMAS
        .iter()
        .map(|&g| tag(s, g, ControllerTag::Mfg).max_l1_to_fpk.unwrap())
        .collect();
    let passed = l1.iter().all(|&x| x <= 0.15);
    let detail = format!(
        "max over t of L1(FPK, {SEEDS}-seed histogram) at gamma 0.1/1/10 = {:.4}/{:.4}/{:.4} (<= 0.15)",
        l1[0], l1[1], l1[2]
    );
    report(8, "mean-field consistency", passed, &detail);
    assert!(passed, "{detail}");
}

#[test]
fn criterion_09_tradeoff_ordering() {
    let s = sweep();
    let epr: Vec<f64> = GAMMAS
        .iter()
        .map(|&g| tag(s, g, ControllerTag::Mfg).steady_state_energy_per_rate)
        .collect();
    let passed = epr.windows(2).all(|w| w[1] >= w[0]);
    let detail = format!(
        "final-quartile EPR at gamma 0.1/1/10 = {:.9e}/{:.9e}/{:.9e} J/bit",
        epr[0], epr[1], epr[2]
    );
    report(9, "trade-off ordering", passed, &detail);
    assert!(passed, "{detail}");
}

#[test]
fn criterion_10_dynamics_exactness() {
    let domain = Domain::new(0.0, 300.0);
    let steps = 10_000;

    let still = WindModel {
        mean_velocity: -3.0,
        volatility: 0.0,
    };
    let dt = 1e-3;
    let z0 = 210.0;
    let v = 0.7;
    let mut s = UavState {
        position: z0,
        velocity: v,
    };
    // Floating tolerance relative to the position scale: 1e4 additions at
    // |z| ~ 200 m round off more than 1e-12 m in absolute terms.
    let (mut drift_err, mut drift_rel): (f64, f64) = (0.0, 0.0);
    for k in 1..=steps {
        s = em_step(s, &still, dt, 0.0, &domain).unwrap();
        let exact = z0 + (v + still.mean_velocity) * dt * k as f64;
        let err = (s.position - exact).abs();
        drift_err = drift_err.max(err);
        drift_rel = drift_rel.max(err / exact.abs().max(z0.abs()));
    }

    let windy = WindModel {
        mean_velocity: -3.0,
        volatility: 0.1,
    };
    let paths = 10_000;
    let (dt, n_steps) = (0.1, 100);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let finals: Vec<f64> = (0..paths)
        .map(|_| {
            let mut s = UavState {
                position: 150.0,
                velocity: 3.0,
            };
            for _ in 0..n_steps {
                let xi: f64 = StandardNormal.sample(&mut rng);
                s = em_step(s, &windy, dt, xi, &domain).unwrap();
            }
            s.position
        })
        .collect();
    let mean = finals.iter().sum::<f64>() / paths as f64;
    let var = finals.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
    let expected = windy.volatility.powi(2) * dt * n_steps as f64;
    let rel = (var - expected).abs() / expected;

    let passed = drift_rel <= 1e-12 && rel <= 0.05;
    let detail = format!(
        "noise-free drift error over {steps} steps = {drift_rel:.3e} relative (<= 1e-12), {drift_err:.3e} m absolute; ensemble variance {var:.5} vs {expected:.5} (rel {rel:.3e}, <= 0.05) over {paths} paths"
    );
    report(10, "dynamics exactness", passed, &detail);
    assert!(passed, "{detail}");
}
