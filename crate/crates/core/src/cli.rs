//! Command line front end.
//!
//! Subcommands: `simulate` (one run of a given control), `optimize` (single
//! harmonic count), `campaign` (full multi-trial sweep) and `validate`
//! (schema check only). Exit codes are stable for scripting: 0 success,
//! 1 configuration error, 2 runtime failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::campaign::{run_campaign, CampaignConfig, CampaignMode, CampaignRecord};
use crate::capsule::CapsuleSystem;
use crate::config::{FileConfig, Overrides};
use crate::fourier::{build_control, ControlShape, FourierControl, SpanParams};
use crate::integrator::integrate;
use crate::io;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "capsule-opt",
    about = "Fourier series open-loop control optimization for a stick-slip capsule drive"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON configuration file; omitted means the built-in baseline.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Cap on concurrent objective evaluations.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Base RNG seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trial count override.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Lowest harmonic count override.
    #[arg(long)]
    pub k_min: Option<usize>,
    /// Highest harmonic count override.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Campaign mode override.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<CampaignMode>,
}

fn parse_mode(s: &str) -> Result<CampaignMode, String> {
    match s {
        "iterative" => Ok(CampaignMode::Iterative),
        "noniterative" => Ok(CampaignMode::NonIterative),
        other => Err(format!("unknown mode {other:?}, expected iterative|noniterative")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one control signal and export the trajectory.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Control specification: {"decision": {...}} or {"fourier": {...}}.
        #[arg(long)]
        control: PathBuf,
    },
    /// Optimize a single harmonic count (the configured k_min).
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the configured multi-trial campaign.
    Campaign {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Check a configuration file without computing anything.
    Validate {
        /// JSON configuration file; omitted means the built-in baseline.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

impl Command {
    pub fn jobs(&self) -> Option<usize> {
        match self {
            Command::Simulate { common, .. }
            | Command::Optimize { common }
            | Command::Campaign { common } => common.jobs,
            Command::Validate { .. } => None,
        }
    }
}

fn load_config(path: Option<&Path>, overrides: Overrides) -> Result<FileConfig, CliError> {
    let mut config = match path {
        Some(p) => FileConfig::load(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => FileConfig::default(),
    };
    overrides.apply(&mut config);
    let violations = config.violations();
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(CliError::Config(violations.join("\n")))
    }
}

fn overrides_of(common: &CommonArgs) -> Overrides {
    Overrides {
        seed: common.seed,
        trials: common.trials,
        k_min: common.k_min,
        k_max: common.k_max,
        mode: common.mode,
    }
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn io_err(context: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

fn control_from_source(
    source: io::ControlSource,
    campaign: &CampaignConfig,
) -> Result<FourierControl, CliError> {
    let control = match source {
        io::ControlSource::Decision { angles, omega, p, q } => {
            let shape =
                ControlShape::new(angles, omega).map_err(|e| CliError::Config(e.to_string()))?;
            let span = SpanParams::new(p, q).map_err(|e| CliError::Config(e.to_string()))?;
            build_control(&shape, span, campaign.bounds, campaign.tau0, campaign.tauf)
                .map_err(|e| CliError::Config(e.to_string()))?
        }
        io::ControlSource::Fourier(control) => {
            control.validate().map_err(|e| CliError::Config(e.to_string()))?;
            control
        }
    };
    Ok(control)
}

/// Simulates `control` on the configured plant and writes
/// `trajectory.csv`, `events.csv` and `control.csv` into `out`.
pub fn simulate(
    config: &FileConfig,
    control: FourierControl,
    out: &Path,
) -> Result<f64, CliError> {
    ensure_out_dir(out)?;
    let campaign = config.to_campaign();
    let system = CapsuleSystem::new(campaign.plant);
    let y0 = [0.0; 4];
    let mode0 = system.classify(&y0, control.evaluate(campaign.tau0));
    let trajectory = integrate(
        &system,
        y0,
        mode0,
        campaign.tau0,
        campaign.tauf,
        &campaign.integrator,
        &|t| control.evaluate(t),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    let eval = |t: f64| control.evaluate(t);
    io::write_trajectory_csv(&out.join("trajectory.csv"), &trajectory, &eval)
        .map_err(io_err("trajectory.csv"))?;
    io::write_events_csv(&out.join("events.csv"), &trajectory).map_err(io_err("events.csv"))?;
    io::write_control_csv(&out.join("control.csv"), &control, campaign.tau0, campaign.tauf)
        .map_err(io_err("control.csv"))?;
    Ok(trajectory.final_state()[2])
}

/// Re-simulates the campaign's best control and writes the plot-ready
/// artifacts next to the records.
fn write_best_artifacts(
    record: &CampaignRecord,
    campaign: &CampaignConfig,
    out: &Path,
) -> Result<(), CliError> {
    let best = &record.best;
    let (shape, span) = crate::campaign::decision_to_control(&best.best_vector, best.k)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let control = build_control(&shape, span, campaign.bounds, campaign.tau0, campaign.tauf)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    io::write_json(&out.join("best_control.json"), &control)
        .map_err(io_err("best_control.json"))?;
    io::write_control_csv(&out.join("best_control.csv"), &control, campaign.tau0, campaign.tauf)
        .map_err(io_err("best_control.csv"))?;

    let system = CapsuleSystem::new(campaign.plant);
    let y0 = [0.0; 4];
    let mode0 = system.classify(&y0, control.evaluate(campaign.tau0));
    let trajectory = integrate(
        &system,
        y0,
        mode0,
        campaign.tau0,
        campaign.tauf,
        &campaign.integrator,
        &|t| control.evaluate(t),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let eval = |t: f64| control.evaluate(t);
    io::write_trajectory_csv(&out.join("best_trajectory.csv"), &trajectory, &eval)
        .map_err(io_err("best_trajectory.csv"))?;
    Ok(())
}

/// Runs the campaign and writes `summary.csv`, `records.json`,
/// `delta_matrix.csv` and the best-control artifacts.
pub fn campaign(config: &FileConfig, out: &Path) -> Result<CampaignRecord, CliError> {
    ensure_out_dir(out)?;
    let campaign_config = config.to_campaign();
    let record = run_campaign(&campaign_config).map_err(|e| CliError::Runtime(e.to_string()))?;

    io::write_summary_csv(&out.join("summary.csv"), &record).map_err(io_err("summary.csv"))?;
    io::write_records_json(&out.join("records.json"), &record).map_err(io_err("records.json"))?;
    io::write_delta_matrix_csv(&out.join("delta_matrix.csv"), &record)
        .map_err(io_err("delta_matrix.csv"))?;
    write_best_artifacts(&record, &campaign_config, out)?;

    if !record.failures.is_empty() {
        io::write_json(&out.join("failures.json"), &record.failures)
            .map_err(io_err("failures.json"))?;
        return Err(CliError::Runtime(format!(
            "{} trial(s) failed; partial results written to {}",
            record.failures.len(),
            out.display()
        )));
    }
    Ok(record)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, control } => {
            let config = load_config(common.config.as_deref(), overrides_of(&common))?;
            let source = io::read_control_source(&control)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let built = control_from_source(source, &config.to_campaign())?;
            let z_final = simulate(&config, built, &common.out)?;
            println!("z(tauf) = {}", io::format_float(z_final));
            println!("distance = {}", io::format_float(z_final.abs()));
            Ok(())
        }
        Command::Optimize { common } => {
            let mut config = load_config(common.config.as_deref(), overrides_of(&common))?;
            // Single harmonic count: collapse the range onto k_min.
            config.campaign.k_max = config.campaign.k_min;
            if common.trials.is_none() {
                config.campaign.trials = 1;
            }
            let record = campaign(&config, &common.out)?;
            println!(
                "k = {}: best distance = {}",
                record.best.k,
                io::format_float(record.best.distance)
            );
            Ok(())
        }
        Command::Campaign { common } => {
            let config = load_config(common.config.as_deref(), overrides_of(&common))?;
            let record = campaign(&config, &common.out)?;
            for row in &record.summaries {
                let delta = row
                    .relative_change_pct
                    .map(|d| format!("{d:+.2}%"))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "K = {:2}  distance = {:.3} +/- {:.3}  delta = {}",
                    row.k, row.mean_distance, row.sd, delta
                );
            }
            println!(
                "best: K = {} trial = {} distance = {}",
                record.best.k,
                record.best.trial,
                io::format_float(record.best.distance)
            );
            Ok(())
        }
        Command::Validate { config } => {
            let loaded = match config.as_deref() {
                Some(p) => FileConfig::load(p).map_err(|e| CliError::Config(e.to_string()))?,
                None => FileConfig::default(),
            };
            let violations = loaded.violations();
            if violations.is_empty() {
                println!("ok");
                Ok(())
            } else {
                for v in &violations {
                    println!("violation: {v}");
                }
                Err(CliError::Config(violations.join("\n")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(CliError::Runtime("x".into()).exit_code(), 2);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(parse_mode("iterative").unwrap(), CampaignMode::Iterative);
        assert_eq!(parse_mode("noniterative").unwrap(), CampaignMode::NonIterative);
        assert!(parse_mode("other").is_err());
    }

    #[test]
    fn cli_parses_campaign_flags() {
        let cli = Cli::parse_from([
            "capsule-opt",
            "campaign",
            "--seed",
            "5",
            "--trials",
            "2",
            "--k-min",
            "2",
            "--k-max",
            "4",
            "--mode",
            "noniterative",
            "--jobs",
            "2",
            "--out",
            "somewhere",
        ]);
        match cli.command {
            Command::Campaign { common } => {
                assert_eq!(common.seed, Some(5));
                assert_eq!(common.trials, Some(2));
                assert_eq!(common.k_min, Some(2));
                assert_eq!(common.k_max, Some(4));
                assert_eq!(common.mode, Some(CampaignMode::NonIterative));
                assert_eq!(common.jobs, Some(2));
                assert_eq!(common.out, PathBuf::from("somewhere"));
            }
            other => panic!("unexpected command {other:?}"),
        }
    }
}
