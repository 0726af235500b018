//! Command line front end.
//!
//! Exit codes: 0 success, 1 a check or comparison failed its tolerance,
//! 2 configuration or usage error, 3 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wmflow::config::{
    execute_check, execute_compare, execute_run, execute_sweep, ConfigError, RunConfig, RunError,
};
use wmflow::diagnostics::ToleranceTable;

#[derive(Parser)]
#[command(
    name = "wmflow",
    version,
    about = "Minimizing-movement solver for fourth-order degenerate parabolic equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Tolerance profile for every checker.
    #[arg(long, value_name = "strict|default", default_value = "default")]
    tol_profile: String,
    /// Metric backend override.
    #[arg(long, value_name = "dynamic|frozen")]
    backend: Option<String>,
    /// Seed for randomized initial data; recorded in the summary.
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scheme and write snapshot, records and summary.
    Run(Common),
    /// Run the scheme and apply the full checker battery.
    Check(Common),
    /// Run every value of the configured parameter sweep in parallel.
    Sweep(Common),
    /// Compare the scheme against the direct finite-difference solver.
    Compare(Common),
}

fn load(common: &Common) -> Result<(RunConfig, ToleranceTable), ConfigError> {
    let mut config = RunConfig::from_path(&common.config)?;
    if let Some(backend) = &common.backend {
        wmflow::config::parse_backend(backend, config.metric.k_slices)?;
        config.metric.backend = backend.clone();
    }
    let table = ToleranceTable::by_name(&common.tol_profile).ok_or_else(|| {
        ConfigError::Invalid(format!("unknown tolerance profile `{}`", common.tol_profile))
    })?;
    Ok((config, table))
}

fn dispatch(command: &Command) -> Result<ExitCode, RunError> {
    match command {
        Command::Run(common) => {
            let (config, table) = load(common)?;
            let (traj, summary) = execute_run(&config, &table, common.seed, &common.out)?;
            println!(
                "run: {} steps, final energy {:.12e}, final mass {:.12e}",
                summary.steps, summary.final_energy, summary.final_mass
            );
            println!("artifacts in {}", common.out.display());
            let _ = traj;
            Ok(ExitCode::SUCCESS)
        }
        Command::Check(common) => {
            let (config, table) = load(common)?;
            let (_, summary) = execute_check(&config, &table, common.seed, &common.out)?;
            let mut failed = 0;
            for check in &summary.checks {
                let verdict = if check.inconclusive {
                    "INCONCLUSIVE"
                } else if check.passed {
                    "pass"
                } else {
                    failed += 1;
                    "FAIL"
                };
                println!(
                    "{verdict:12} {:24} lhs {:.6e}  rhs {:.6e}  slack {:.3e}",
                    check.name, check.lhs, check.rhs, check.slack
                );
            }
            if failed > 0 {
                eprintln!("{failed} check(s) failed");
                Ok(ExitCode::from(1))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Sweep(common) => {
            let (config, table) = load(common)?;
            let entries = execute_sweep(&config, &table, common.seed, &common.out)?;
            for entry in &entries {
                println!(
                    "{} = {:<12} -> {}  final energy {:.12e}",
                    entry.parameter, entry.value, entry.directory, entry.final_energy
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare(common) => {
            let (config, table) = load(common)?;
            let summary = execute_compare(&config, &table, common.seed, &common.out)?;
            println!("direct solver: {}", summary.direct_status);
            println!(
                "Linf difference {:.6e} (tolerance {:.1e}), L2 difference {:.6e}",
                summary.linf_difference, summary.tol_linf, summary.l2_difference
            );
            println!("scheme box violations: {}", summary.scheme_box_violations);
            if summary.direct_status == "completed" && !summary.within_tolerance {
                Ok(ExitCode::from(1))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(RunError::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("runtime error: {e}");
            ExitCode::from(3)
        }
    }
}
