//! `mfgflock`: validate, solve and replay UAV flocking scenarios.
//!
//! Exit status: 0 on success, 1 on a config or I/O error, 2 when a solve
//! did not converge under `--strict`, 3 when an oracle check failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use mfgflock_core::config::{load_config, ScenarioConfig};
use mfgflock_core::pipeline::{run_oracles, run_pipeline, RunOptions};

#[derive(Parser)]
#[command(
    name = "mfgflock",
    version,
    about = "Mean-field flocking control for UAV fleets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve, replay and write all artifacts.
    Run(RunArgs),
    /// Check a config file and print the resolved echo.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the independent solver checks and print one line per check.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated collision aversion factors, e.g. `0.1,1,10`.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// Seed count (`100`), half-open range (`0..100`) or list (`3,7,11`).
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Exit with status 2 if any solve fails to converge.
    #[arg(long)]
    strict: bool,
    /// Run directory; defaults to the config's `run.output_dir`, then
    /// `$MFGFLOCK_OUTPUT_ROOT/<config hash>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_seeds(text: &str, start: u64) -> Result<Vec<u64>, String> {
    let bad = |_| format!("invalid --seeds value {text:?}");
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (
            a.trim().parse::<u64>().map_err(bad)?,
            b.trim().parse::<u64>().map_err(bad)?,
        );
        (a..b).collect()
    } else if text.contains(',') {
        text.split(',')
            .map(|s| s.trim().parse::<u64>().map_err(bad))
            .collect::<Result<_, _>>()?
    } else {
        let n = text.trim().parse::<u64>().map_err(bad)?;
        (start..start + n).collect()
    };
    if seeds.is_empty() {
        return Err(format!("--seeds {text:?} selects no seeds"));
    }
    Ok(seeds)
}

fn load(path: &Path) -> Result<ScenarioConfig, ExitCode> {
    load_config(path).map_err(|e| {
        error!("{}: {e}", path.display());
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(1)
    })
}

fn run(args: RunArgs) -> Result<ExitCode, ExitCode> {
    let config = load(&args.config)?;
    let mut options = RunOptions::from_config(&config);
    if let Some(g) = args.gammas {
        options.gammas = g;
    }
    if let Some(s) = &args.seeds {
        options.seeds = parse_seeds(s, config.run.seed_start).map_err(|e| {
            eprintln!("error: {e}");
            ExitCode::from(1)
        })?;
    }
    if let Some(j) = args.jobs {
        options.jobs = j;
    }
    if let Some(out) = args.out {
        options.out_dir = out;
    }
    options.strict = args.strict;
    let outcome = run_pipeline(&config, &options).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })?;
    println!("{}", outcome.out_dir.display());
    if !outcome.summary.all_converged {
        eprintln!("warning: at least one solve did not converge (see summary.json)");
    }
    Ok(ExitCode::from(outcome.exit_code(options.strict) as u8))
}

fn oracle(config: PathBuf) -> Result<ExitCode, ExitCode> {
    let config = load(&config)?;
    let checks = run_oracles(&config).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })?;
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { config } => load(&config).map(|c| {
            print!("{}", c.to_toml_string());
            ExitCode::SUCCESS
        }),
        Command::Oracle { config } => oracle(config),
    };
    result.unwrap_or_else(|code| code)
}
