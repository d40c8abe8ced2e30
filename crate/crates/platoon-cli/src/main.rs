//! Command-line runner: execute scenarios, compare channels, render charts.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use platoon_core::kernel::ChannelKind;
use platoon_core::output;
use platoon_core::scenario::{self, ScenarioConfig, ScenarioError, THREADS_ENV};

#[derive(Parser)]
#[command(
    name = "platoon-sim",
    version,
    about = "Vehicle platooning co-simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Ideal,
    Itsg5,
}

impl From<ChannelArg> for ChannelKind {
    fn from(c: ChannelArg) -> ChannelKind {
        match c {
            ChannelArg::Ideal => ChannelKind::Ideal,
            ChannelArg::Itsg5 => ChannelKind::ItsG5,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv, cam_log.csv,
    /// received_signal.csv and metrics.json.
    Run {
        /// Scenario JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if absent).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario channel.
        #[arg(long)]
        channel: Option<ChannelArg>,
    },
    /// Run the same scenario over the ideal link and the radio channel and
    /// write both result sets plus a combined received_signal.csv.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render velocity, trajectory and received-signal charts from the CSV
    /// files in the output directory.
    Plot {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    if std::env::var(THREADS_ENV).is_ok_and(|v| v.parse::<usize>().is_err()) {
        eprintln!("warning: ignoring unparsable {THREADS_ENV}");
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            channel,
        } => cmd_run(&config, &out, seed, channel),
        Command::Compare { config, out, seed } => cmd_compare(&config, &out, seed),
        Command::Plot { out } => plot::cmd_plot(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    channel: Option<ChannelArg>,
) -> Result<ScenarioConfig, ScenarioError> {
    if !path.exists() {
        return Err(ScenarioError::Config(format!(
            "config file {} does not exist",
            path.display()
        )));
    }
    let mut cfg = ScenarioConfig::from_path(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(channel) = channel {
        cfg.channel = channel.into();
    }
    Ok(cfg)
}

fn cmd_run(
    config: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    channel: Option<ChannelArg>,
) -> Result<(), ScenarioError> {
    let cfg = load_config(config, seed, channel)?;
    let run = scenario::run_scenario(&cfg)?;
    output::write_run_outputs(&run, out_dir)?;
    println!(
        "run complete: {} vehicles, {:.1} s over {} channel -> {}",
        cfg.n_vehicles,
        cfg.duration,
        run.channel.label(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_compare(config: &Path, out_dir: &Path, seed: Option<u64>) -> Result<(), ScenarioError> {
    let cfg = load_config(config, seed, None)?;
    let cmp = scenario::compare_channels(&cfg)?;
    output::write_run_outputs(&cmp.ideal, &out_dir.join("ideal"))?;
    output::write_run_outputs(&cmp.itsg5, &out_dir.join("itsg5"))?;
    std::fs::create_dir_all(out_dir)?;
    output::write_received_comparison_csv(
        &cmp.ideal.received,
        &cmp.itsg5.received,
        std::fs::File::create(out_dir.join("received_signal.csv"))?,
    )?;
    println!(
        "comparison complete: ideal and itsg5 results under {}",
        out_dir.display()
    );
    Ok(())
}
