//! `wgmopo`: figure-style computations for a whispering-gallery parametric source.

mod commands;
mod error;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wgmopo_core::data::data_dir;
use wgmopo_core::fit::FitKind;

use crate::commands::Ctx;
use crate::error::{CliError, Result};
use crate::output::{Format, Meta, OutputDir, VERSION};
use crate::scenario::Loaded;

#[derive(Debug, Parser)]
#[command(name = "wgmopo", version, about = "Mode spectra, tuning, vapor absorption and pair correlations of a WGM parametric source")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON file
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Output directory (overrides the scenario's output_dir)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Format of tabular outputs
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Direct,
    Fluorescence,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the calibration offset from the anchor operating point
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Phase-matched signal and idler wavelengths versus temperature
    TuningCurve {
        #[command(flatten)]
        common: Common,
        /// Temperature grid step for root bracketing, °C
        #[arg(long, value_name = "C")]
        grid_step_c: Option<f64>,
    },
    /// Fixed-pump and pump-mode step tables from the anchor
    Steps {
        #[command(flatten)]
        common: Common,
        /// Temperature grid step for root bracketing, °C
        #[arg(long, value_name = "C")]
        grid_step_c: Option<f64>,
    },
    /// Substrate sweep over the actuator range and continuous-tuning plans
    Perturb {
        #[command(flatten)]
        common: Common,
        /// Number of voltage points
        #[arg(long, value_name = "N")]
        bins: Option<usize>,
    },
    /// Vapor-cell optical depth and transmission spectra
    Vapor {
        #[command(flatten)]
        common: Common,
        /// Number of frequency points per cell
        #[arg(long, value_name = "N")]
        bins: Option<usize>,
    },
    /// Pair-rate profile versus temperature around the anchor
    Bandwidth {
        #[command(flatten)]
        common: Common,
        /// Number of temperature points
        #[arg(long, value_name = "N")]
        bins: Option<usize>,
    },
    /// Monte-Carlo detector streams and coincidence histograms
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Base RNG seed; run k uses seed + k
        #[arg(long, value_name = "U64")]
        seed: Option<u64>,
        /// Number of histogram bins (odd)
        #[arg(long, value_name = "N")]
        bins: Option<usize>,
    },
    /// Fit a correlation model to a coincidence histogram
    Fit {
        #[command(flatten)]
        common: Common,
        /// Histogram file (tau_ns,counts CSV or histogram JSON)
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Model to fit
        #[arg(long, value_enum)]
        kind: KindArg,
    },
}

fn context(common: &Common) -> Result<Ctx> {
    let loaded = Loaded::from_file(&common.scenario, data_dir())?;
    let dir = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&loaded.scenario.output_dir));
    let meta = Meta {
        tool: "wgmopo",
        version: VERSION,
        scenario: loaded.scenario.name.clone(),
        scenario_sha256: loaded.sha256.clone(),
    };
    Ok(Ctx {
        out: OutputDir::create(dir, meta)?,
        loaded,
        format: common.format,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate { common } => commands::calibrate_cmd(&context(&common)?),
        Command::TuningCurve { common, grid_step_c } => commands::tuning_curve(&context(&common)?, grid_step_c),
        Command::Steps { common, grid_step_c } => commands::steps(&context(&common)?, grid_step_c),
        Command::Perturb { common, bins } => commands::perturb(&context(&common)?, bins),
        Command::Vapor { common, bins } => commands::vapor(&context(&common)?, bins),
        Command::Bandwidth { common, bins } => commands::bandwidth(&context(&common)?, bins),
        Command::Simulate { common, seed, bins } => commands::simulate_cmd(&context(&common)?, seed, bins),
        Command::Fit { common, input, kind } => {
            let kind = match kind {
                KindArg::Direct => FitKind::Direct,
                KindArg::Fluorescence => FitKind::Fluorescence,
            };
            commands::fit_cmd(&context(&common)?, &input, kind)
        }
    }
}

fn report(e: &CliError) -> ExitCode {
    let doc = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
    eprintln!("{doc}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return report(&CliError::Usage(e.to_string().trim_end().to_string()));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
