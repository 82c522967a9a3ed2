//! CSV and JSON artifact writers.
//!
//! Every CSV starts with a header row; numeric cells are printed with 17
//! significant digits so they parse back to the exact same `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::campaign::CampaignRecord;
use crate::capsule::ContactMode;
use crate::fourier::FourierControl;
use crate::integrator::Trajectory;

/// Sampling stride for exported control signals.
pub const CONTROL_STRIDE: f64 = 0.01;

/// Full-precision decimal rendering: 17 significant digits round-trip any
/// finite `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// A control specification accepted by the `simulate` subcommand: either a
/// decision vector (angles + omega + span) or explicit Fourier
/// coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlSource {
    Decision { angles: Vec<f64>, omega: f64, p: f64, q: f64 },
    Fourier(FourierControl),
}

pub fn read_control_source(path: &Path) -> Result<ControlSource, crate::config::ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| crate::config::ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| crate::config::ConfigError::Parse {
        path: path.display().to_string(),
        source,
    })
}

fn write_rows(
    path: &Path,
    header: &str,
    rows: impl Iterator<Item = String>,
) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush()
}

/// `tau, theta, theta_dot, z, z_dot, mode, u` at every recorded sample.
pub fn write_trajectory_csv(
    path: &Path,
    trajectory: &Trajectory<ContactMode, 4>,
    control: &impl Fn(f64) -> f64,
) -> std::io::Result<()> {
    write_rows(
        path,
        "tau,theta,theta_dot,z,z_dot,mode,u",
        trajectory.times.iter().zip(&trajectory.states).zip(&trajectory.modes).map(
            |((t, y), mode)| {
                format!(
                    "{},{},{},{},{},{},{}",
                    format_float(*t),
                    format_float(y[0]),
                    format_float(y[1]),
                    format_float(y[2]),
                    format_float(y[3]),
                    mode,
                    format_float(control(*t))
                )
            },
        ),
    )
}

/// `tau, from_mode, to_mode` per logged transition.
pub fn write_events_csv(
    path: &Path,
    trajectory: &Trajectory<ContactMode, 4>,
) -> std::io::Result<()> {
    write_rows(
        path,
        "tau,from_mode,to_mode",
        trajectory
            .events
            .iter()
            .map(|ev| format!("{},{},{}", format_float(ev.time), ev.from, ev.to)),
    )
}

/// `tau, u` sampled at a fixed stride over the horizon.
pub fn write_control_csv(
    path: &Path,
    control: &FourierControl,
    t0: f64,
    tf: f64,
) -> std::io::Result<()> {
    let steps = ((tf - t0) / CONTROL_STRIDE).round() as usize;
    write_rows(
        path,
        "tau,u",
        (0..=steps).map(|i| {
            let t = (t0 + i as f64 * CONTROL_STRIDE).min(tf);
            format!("{},{}", format_float(t), format_float(control.evaluate(t)))
        }),
    )
}

/// Table-style summary: one row per harmonic count.
pub fn write_summary_csv(path: &Path, record: &CampaignRecord) -> std::io::Result<()> {
    write_rows(
        path,
        "approach,k,trials,mean_distance,sd,relative_change_pct",
        record.summaries.iter().map(|row| {
            let delta = row.relative_change_pct.map(format_float).unwrap_or_default();
            format!(
                "{},{},{},{},{},{}",
                record.mode,
                row.k,
                row.trials,
                format_float(row.mean_distance),
                format_float(row.sd),
                delta
            )
        }),
    )
}

/// Per-trial percent changes between consecutive harmonic counts, one row
/// per transition, one column per trial (empty cell where a trial stopped
/// early).
pub fn write_delta_matrix_csv(path: &Path, record: &CampaignRecord) -> std::io::Result<()> {
    let mut trial_ids: Vec<usize> = record.trials.iter().map(|t| t.trial).collect();
    trial_ids.sort_unstable();
    trial_ids.dedup();
    let mut ks: Vec<usize> = record.trials.iter().map(|t| t.k).collect();
    ks.sort_unstable();
    ks.dedup();

    let distance = |k: usize, trial: usize| {
        record.trials.iter().find(|t| t.k == k && t.trial == trial).map(|t| t.distance)
    };

    let header = std::iter::once("k".to_string())
        .chain(trial_ids.iter().map(|t| format!("trial_{t}")))
        .collect::<Vec<_>>()
        .join(",");
    let rows = ks.windows(2).map(|pair| {
        let (prev, next) = (pair[0], pair[1]);
        let mut cells = vec![next.to_string()];
        for &trial in &trial_ids {
            let cell = match (distance(prev, trial), distance(next, trial)) {
                (Some(a), Some(b)) => crate::campaign::relative_change(a, b)
                    .map(format_float)
                    .unwrap_or_default(),
                _ => String::new(),
            };
            cells.push(cell);
        }
        cells.join(",")
    });
    write_rows(path, &header, rows)
}

pub fn write_records_json(path: &Path, record: &CampaignRecord) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, record)?;
    out.flush()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.flush()
}
