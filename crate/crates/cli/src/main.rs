//! Batch front end for the two-charge atom dynamics library.
//!
//! Every run is driven by a scenario configuration file (see the README for
//! the schema); individual keys can be overridden with `--set`. Exit codes:
//! 0 success, 1 validation error, 2 runtime/singularity error.

mod commands;
mod output;
mod scenario;

use clap::{Parser, Subcommand};
use scenario::Scenario;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "magatom",
    version,
    about = "Classical two-charge atom dynamics in external magnetic fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Scenario configuration file (TOML).
    scenario: PathBuf,
    /// Override a scenario key: e.g. --set seed=7 --set integrator.stride=5.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides [output] dir).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seed override (shortcut for --set seed=N).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the direct two-particle equations and write the trajectory.
    SimulateDirect(CommonArgs),
    /// Integrate the reduced center-of-mass equations and write the
    /// trajectory.
    SimulateReduced {
        #[command(flatten)]
        common: CommonArgs,
        /// Use the simplified Stern-Gerlach form of the CoM equation
        /// (linear fields only).
        #[arg(long)]
        simplified: bool,
    },
    /// Run both formulations and write a deviation report; fails when the
    /// normalized RMS CoM deviation exceeds the configured threshold.
    Compare(CommonArgs),
    /// Build and run a beam ensemble, writing the statistics report.
    Ensemble(CommonArgs),
    /// Sample the far-field structure on a planar grid.
    Fieldmap(CommonArgs),
    /// Time-average the far vector potential and fit the magnetic moment.
    Moment(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::SimulateDirect(c)
            | Command::Compare(c)
            | Command::Ensemble(c)
            | Command::Fieldmap(c)
            | Command::Moment(c) => c,
            Command::SimulateReduced { common, .. } => common,
        }
    }
}

fn load_scenario(args: &CommonArgs) -> anyhow::Result<Scenario> {
    let text = std::fs::read_to_string(&args.scenario).map_err(|e| {
        anyhow::anyhow!("cannot read scenario {}: {e}", args.scenario.display())
    })?;
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    Scenario::parse_with_overrides(&text, &overrides)
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    let common = cli.command.common();
    let scenario = load_scenario(common)?;
    let out_dir = common
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&scenario.output.dir));
    match &cli.command {
        Command::SimulateDirect(_) => commands::simulate(&scenario, &out_dir, true, false),
        Command::SimulateReduced { simplified, .. } => {
            commands::simulate(&scenario, &out_dir, false, *simplified)
        }
        Command::Compare(_) => commands::compare(&scenario, &out_dir),
        Command::Ensemble(_) => commands::ensemble(&scenario, &out_dir),
        Command::Fieldmap(_) => commands::fieldmap(&scenario, &out_dir),
        Command::Moment(_) => commands::moment(&scenario, &out_dir),
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<commands::ThresholdBreach>().is_some() {
        return 2;
    }
    if let Some(core) = err.downcast_ref::<magatom_core::error::Error>() {
        return if commands::is_runtime_error(core) { 2 } else { 1 };
    }
    // Parse/IO/config problems.
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
