use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lhtrack::manifest::{Estimator, RunManifest};
use lhtrack::pipeline::{self, EstimateOptions, PipelineError, ReportOptions};
use lhtrack_core::alignment::AlignConfig;
use lhtrack_core::ekf::EkfConfig;

/// Lighthouse positioning: simulate sessions, estimate positions, align
/// them with motion capture and report accuracy.
#[derive(Parser)]
#[command(name = "lhtrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario config into a session directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate positions from the session's sweep angles.
    Estimate {
        #[arg(long)]
        session: PathBuf,
        /// crossing_beam (cb) or ekf.
        #[arg(long, default_value = "crossing_beam")]
        estimator: String,
        /// Crossing beam: sensors with δ above this (m²) are not averaged.
        #[arg(long, default_value_t = lhtrack_core::crossing_beam::DEFAULT_DELTA_GATE)]
        delta_gate: f64,
        /// EKF measurement noise, radians.
        #[arg(long, default_value_t = EkfConfig::default().angle_noise)]
        angle_noise: f64,
        /// EKF velocity random-walk density, m²/s³.
        #[arg(long, default_value_t = EkfConfig::default().process_noise)]
        process_noise: f64,
    },
    /// Align estimates with the motion-capture stream.
    Align {
        #[arg(long)]
        session: PathBuf,
        /// Offset search half-range, seconds.
        #[arg(long, default_value_t = AlignConfig::default().range)]
        range: f64,
        /// Coarse offset step, seconds.
        #[arg(long, default_value_t = AlignConfig::default().coarse_step)]
        step: f64,
    },
    /// Filter the aligned dataset and write precision and accuracy tables.
    Report {
        #[arg(long)]
        session: PathBuf,
        /// Crossing beam: drop records with δ above this.
        #[arg(long, default_value_t = lhtrack_core::metrics::DEFAULT_DELTA_MAX)]
        delta_max: f64,
    },
    /// Run the whole pipeline for each manifest, in parallel.
    Batch {
        manifests: Vec<PathBuf>,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
}

const EXIT_DATA: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lhtrack: {e}");
            ExitCode::from(EXIT_DATA)
        }
    }
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Simulate { config, out, seed } => {
            let s = pipeline::simulate(&config, &out, seed, Estimator::default())?;
            println!("{}: {} events ({} sweeps), {} mocap samples", out.display(), s.cf_events, s.sweeps, s.mocap_samples);
        }
        Command::Estimate {
            session,
            estimator,
            delta_gate,
            angle_noise,
            process_noise,
        } => {
            let estimator: Estimator = estimator.parse()?;
            let options = EstimateOptions {
                delta_gate,
                ekf: EkfConfig {
                    angle_noise,
                    process_noise,
                    ..EkfConfig::default()
                },
                ..EstimateOptions::default()
            };
            let s = pipeline::estimate(&session, estimator, &options)?;
            println!("{}: {} estimates from {} epochs, {} rejected", s.estimator, s.estimates, s.epochs, s.rejected);
        }
        Command::Align { session, range, step } => {
            let config = AlignConfig {
                range,
                coarse_step: step,
                ..AlignConfig::default()
            };
            let ds = pipeline::align(&session, &config)?;
            println!(
                "offsets {:+.1} ms / {:+.1} ms, residual {:.3} mm over {} records",
                ds.offsets.0 * 1e3,
                ds.offsets.1 * 1e3,
                ds.residual * 1e3,
                ds.records.len()
            );
        }
        Command::Report { session, delta_max } => {
            let options = ReportOptions {
                delta_max,
                ..ReportOptions::default()
            };
            pipeline::report(&session, &options)?;
            print!("{}", std::fs::read_to_string(session.join(pipeline::REPORT_FILE)).unwrap_or_default());
        }
        Command::Batch { manifests, jobs } => {
            let loaded = manifests.iter().map(|p| RunManifest::load(p)).collect::<Result<Vec<_>, _>>()?;
            let results = pipeline::batch(&loaded, jobs);
            let mut failed = None;
            for (m, r) in loaded.iter().zip(results) {
                match r {
                    Ok(report) => println!(
                        "{}: P = {:.3} mm, mean error = {:.3} mm",
                        m.output.display(),
                        report.precision * 1e3,
                        report.accuracy.mean * 1e3
                    ),
                    Err(e) => {
                        eprintln!("lhtrack: {}: {e}", m.output.display());
                        failed = Some(e);
                    }
                }
            }
            if let Some(e) = failed {
                return Err(e);
            }
        }
    }
    Ok(())
}
