//! `bimloc`: build semantic maps from building models, simulate LiDAR scans,
//! localize against the map, and score trajectories.
//!
//! Every command exits nonzero on failure with a single stderr line of the
//! form `E_CODE: message`.

mod commands;
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bimloc", version, about = "Mapping-free LiDAR localization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a building mesh + element boxes into a semantic point-cloud map.
    Mapgen(commands::MapgenArgs),
    /// Ray-cast a scan sequence along a ground-truth trajectory.
    Simulate(commands::SimulateArgs),
    /// Track a scan sequence against a semantic map.
    Localize(commands::LocalizeArgs),
    /// Score an estimated trajectory against ground truth.
    Evaluate(commands::EvaluateArgs),
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Mapgen(args) => commands::mapgen(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Localize(args) => commands::localize(args),
        Command::Evaluate(args) => commands::evaluate_cmd(args),
    };
    if let Err(error) = result {
        let code = error
            .chain()
            .find_map(|cause| cause.downcast_ref::<bimloc::Error>())
            .map_or("E_CLI", bimloc::Error::code);
        eprintln!("{code}: {error:#}");
        std::process::exit(1);
    }
}
