//! `coopsense` — command-line front end for the collective-perception
//! toolkit: single-shot uncertainty-aware transforms, sweep and scenario
//! execution with CSV/SVG artifacts, and CPM wire-format inspection.
//!
//! Exit codes: 0 on success, 2 on input/schema errors, 3 on codec errors.

mod commands;
mod csv_out;
mod error;
mod svg;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Svg,
    Both,
}

impl OutputFormat {
    pub fn csv(&self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }
    pub fn svg(&self) -> bool {
        matches!(self, OutputFormat::Svg | OutputFormat::Both)
    }
}

#[derive(Parser)]
#[command(
    name = "coopsense",
    version,
    about = "Collective-perception toolkit: CPM codec, uncertainty-aware \
             frame transforms, road-user tracking, and path planning"
)]
pub struct Cli {
    /// Override the seed of the loaded scenario or sweep.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for generated artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Which artifact kinds to write.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Both)]
    pub format: OutputFormat,

    /// Probability mass of rendered confidence ellipses.
    #[arg(long, global = true, default_value_t = 0.95)]
    pub mass: f64,

    /// Reference grid spacing of SVG plots, meters.
    #[arg(long, global = true, default_value_t = 10.0)]
    pub grid: f64,

    /// Print progress details.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Transform a perceived object into the receiver frame with full
    /// uncertainty propagation.
    Transform(commands::transform::TransformArgs),
    /// Run an uncertainty sweep file; writes one CSV plus one SVG per
    /// (mode, value, offset) combination.
    Sweep(commands::sweep::SweepArgs),
    /// Run a scenario file through the perceive→encode→decode→transform→
    /// track→plan pipeline; writes a tick-indexed CSV and an overhead SVG.
    Scenario(commands::scenario::ScenarioArgs),
    /// Encode, decode, and inspect CPM wire messages.
    Cpm(commands::cpm::CpmArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Transform(args) => commands::transform::run(&cli, args),
        Command::Sweep(args) => commands::sweep::run(&cli, args),
        Command::Scenario(args) => commands::scenario::run(&cli, args),
        Command::Cpm(args) => commands::cpm::run(&cli, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
