use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use das_traffic_cli::{
    apply_tuned, cmd_extract, cmd_report, cmd_simulate, cmd_track, cmd_tune, load_tune_result,
    Failure, RunConfig,
};

/// Traffic tracking from DAS strain data.
#[derive(Parser)]
#[command(name = "das-traffic", version)]
struct Cli {
    /// JSON run configuration; every section is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed, overriding the scenario's (simulate only).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario: strain field, picks, ground truth and event log.
    Simulate {
        scenario: PathBuf,
        /// Fiber position of the simulated logging site, meters.
        #[arg(long)]
        event_position: Option<f64>,
    },
    /// Extract picks from a strain file, one batch at a time.
    Extract {
        strain: PathBuf,
        /// Take smoothing width, threshold and DBSCAN radius from a tune result.
        #[arg(long)]
        tuned: Option<PathBuf>,
    },
    /// Grid-search extraction parameters against an event log.
    Tune { strain: PathBuf, events: PathBuf },
    /// Track picks.
    Track {
        picks: PathBuf,
        /// Ground truth CSV from `simulate`; adds metrics.json.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Bin confirmed tracks into traffic counts and mean velocities.
    Report {
        tracks: PathBuf,
        #[arg(long)]
        bin_minutes: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate {
            scenario,
            event_position,
        } => {
            let out = cmd_simulate(&scenario, &cli.out, cli.seed, event_position)?;
            println!("wrote {}", out.picks.display());
        }
        Command::Extract { strain, tuned } => {
            if let Some(path) = tuned {
                apply_tuned(&mut cfg, &load_tune_result(&path)?);
            }
            let path = cmd_extract(&strain, &cfg, &cli.out)?;
            println!("wrote {}", path.display());
        }
        Command::Tune { strain, events } => {
            let r = cmd_tune(&strain, &events, &cfg, &cli.out)?;
            println!(
                "kappa {} A {} epsilon {} objective {}",
                r.best_kappa, r.best_threshold, r.best_epsilon, r.objective_value
            );
        }
        Command::Track { picks, truth } => {
            let path = cmd_track(&picks, &cfg, &cli.out, truth.as_deref())?;
            println!("wrote {}", path.display());
        }
        Command::Report { tracks, bin_minutes } => {
            if let Some(b) = bin_minutes {
                cfg.report.bin_minutes = b;
            }
            let (counts, velocities) = cmd_report(&tracks, &cfg, &cli.out)?;
            println!("wrote {} and {}", counts.display(), velocities.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
