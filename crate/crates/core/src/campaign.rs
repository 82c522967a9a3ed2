//! Cost functional and optimization campaigns.
//!
//! The decision vector for `K` harmonics is `[phi_1 .. phi_{2K-1}, omega,
//! p, q]`. Its cost is the negative absolute distance the capsule covers
//! under the control the vector describes, simulated from rest over
//! `[tau0, tauf]`, so minimizing the cost maximizes the distance.
//!
//! Two campaign styles are provided. The non-iterative one optimizes every
//! harmonic count independently from random initial populations. The
//! iterative one chains harmonic counts: the optimum at `K` is extended to
//! `K + 1` (exactly, see [`crate::fourier::extend_harmonics`]) and injected
//! into the next initial population, whose greedy selection then guarantees
//! the distance never deteriorates as `K` grows.

use std::f64::consts::TAU;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capsule::{CapsuleParams, CapsuleSystem};
use crate::fourier::{build_control, extend_harmonics, ControlBounds, ControlShape, SpanParams};
use crate::integrator::{propagate, IntegratorConfig};
use crate::optimizer::{optimize_with_rng, BoxBounds, DeConfig, OptimizerError};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CampaignMode {
    NonIterative,
    Iterative,
}

impl std::fmt::Display for CampaignMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CampaignMode::NonIterative => f.write_str("noniterative"),
            CampaignMode::Iterative => f.write_str("iterative"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub trials: usize,
    pub tau0: f64,
    pub tauf: f64,
    pub plant: CapsuleParams,
    pub bounds: ControlBounds,
    pub integrator: IntegratorConfig,
    pub de: DeConfig,
    pub mode: CampaignMode,
    pub base_seed: u64,
    /// Iterative chains stop early once the distance gain at a new harmonic
    /// count drops below this. Negative values disable early stopping.
    pub improvement_threshold: f64,
    /// Upper optimizer bound for the fundamental frequency; the lower bound
    /// is one full period over the horizon, `2 pi / (tauf - tau0)`.
    pub omega_max: f64,
    /// Optimizer range for the span parameters `p` and `q`.
    pub span_floor: f64,
    pub span_ceiling: f64,
    /// Extra seed members scattered around the extended optimum when a
    /// harmonic count is warm-started. The exact extension is always seeded
    /// first, so the monotonicity guarantee does not depend on these.
    pub warm_start_companions: usize,
    /// Companion scatter, as a fraction of each dimension's box width.
    pub warm_start_jitter: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 10,
            trials: 5,
            tau0: 0.0,
            tauf: 100.0,
            plant: CapsuleParams::default(),
            bounds: ControlBounds::default(),
            integrator: IntegratorConfig::default(),
            de: DeConfig::default(),
            mode: CampaignMode::Iterative,
            base_seed: 1,
            improvement_threshold: 1e-6,
            omega_max: 10.0,
            span_floor: 1e-6,
            span_ceiling: 1.0,
            warm_start_companions: 15,
            warm_start_jitter: 0.03,
        }
    }
}

impl CampaignConfig {
    pub fn omega_min(&self) -> f64 {
        TAU / (self.tauf - self.tau0)
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let mut violations = self.violations();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(CampaignError::BadConfig(violations.remove(0)))
        }
    }

    /// All schema violations, empty when the configuration is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.k_min < 1 {
            out.push("k_min must be at least 1".into());
        }
        if self.k_min > self.k_max {
            out.push(format!("k_min = {} exceeds k_max = {}", self.k_min, self.k_max));
        }
        if self.trials < 1 {
            out.push("trials must be at least 1".into());
        }
        if !(self.tauf > self.tau0) {
            out.push(format!("time span [{}, {}] is empty", self.tau0, self.tauf));
        }
        if let Err(e) = self.plant.validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.bounds.validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.integrator.validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.de.validate() {
            out.push(e.to_string());
        }
        if self.tauf > self.tau0 && !(self.omega_max > self.omega_min()) {
            out.push(format!(
                "omega_max = {} must exceed the horizon frequency {}",
                self.omega_max,
                self.omega_min()
            ));
        }
        if !(self.span_floor > 0.0) || self.span_floor >= 1.0 {
            out.push(format!("span_floor = {} must lie in (0, 1)", self.span_floor));
        }
        if self.span_ceiling > 1.0 {
            out.push(format!("span_ceiling = {} must not exceed 1", self.span_ceiling));
        }
        if self.span_ceiling <= self.span_floor {
            out.push(format!(
                "span_ceiling = {} must exceed span_floor = {}",
                self.span_ceiling, self.span_floor
            ));
        }
        if !self.improvement_threshold.is_finite() {
            out.push("improvement_threshold must be finite".into());
        }
        if !(0.0..1.0).contains(&self.warm_start_jitter) {
            out.push(format!(
                "warm_start_jitter = {} must lie in [0, 1)",
                self.warm_start_jitter
            ));
        }
        out
    }

    /// Optimizer box for `K` harmonics: `2K - 2` polar angles in `[0, pi]`,
    /// the final azimuthal angle in `[0, 2 pi]`, then omega, p, q.
    pub fn decision_bounds(&self, harmonics: usize) -> BoxBounds {
        let n_angles = 2 * harmonics - 1;
        let mut lower = vec![0.0; n_angles];
        let mut upper = vec![std::f64::consts::PI; n_angles];
        upper[n_angles - 1] = TAU;
        lower.push(self.omega_min());
        upper.push(self.omega_max);
        lower.push(self.span_floor);
        upper.push(self.span_ceiling);
        lower.push(self.span_floor);
        upper.push(self.span_ceiling);
        BoxBounds::new(lower, upper).expect("constructed bounds are valid")
    }
}

/// Splits a flat decision vector into shape and span.
pub fn decision_to_control(
    v: &[f64],
    harmonics: usize,
) -> Result<(ControlShape, SpanParams), crate::fourier::ShapeError> {
    let n_angles = 2 * harmonics - 1;
    debug_assert_eq!(v.len(), n_angles + 3);
    let shape = ControlShape::new(v[..n_angles].to_vec(), v[n_angles])?;
    let span = SpanParams::new(v[n_angles + 1], v[n_angles + 2])?;
    Ok((shape, span))
}

/// Inverse of [`decision_to_control`].
pub fn control_to_decision(shape: &ControlShape, span: SpanParams) -> Vec<f64> {
    let mut v = shape.angles.clone();
    v.push(shape.omega);
    v.push(span.p);
    v.push(span.q);
    v
}

#[derive(Default)]
struct CostDiagnostics {
    failures: AtomicUsize,
    liftoff_runs: AtomicUsize,
}

/// Cost of one decision vector: `-|z(tauf) - z(tau0)|` for the capsule
/// driven from rest by the control the vector encodes. Invalid vectors and
/// failed integrations cost `+inf` so the optimizer stays total.
pub fn evaluate_cost(v: &[f64], harmonics: usize, config: &CampaignConfig) -> f64 {
    evaluate_cost_counted(v, harmonics, config, None)
}

fn evaluate_cost_counted(
    v: &[f64],
    harmonics: usize,
    config: &CampaignConfig,
    diagnostics: Option<&CostDiagnostics>,
) -> f64 {
    let fail = || {
        if let Some(d) = diagnostics {
            d.failures.fetch_add(1, Ordering::Relaxed);
        }
        f64::INFINITY
    };
    let Ok((shape, span)) = decision_to_control(v, harmonics) else {
        return fail();
    };
    let Ok(control) = build_control(&shape, span, config.bounds, config.tau0, config.tauf) else {
        return fail();
    };
    let system = CapsuleSystem::new(config.plant);
    let y0 = [0.0; 4];
    let mode0 = system.classify(&y0, control.evaluate(config.tau0));
    match propagate(&system, y0, mode0, config.tau0, config.tauf, &config.integrator, &|t| {
        control.evaluate(t)
    }) {
        Ok(end) => {
            if let Some(d) = diagnostics {
                if end.flagged_samples > 0 {
                    d.liftoff_runs.fetch_add(1, Ordering::Relaxed);
                }
            }
            -(end.state[2] - y0[2]).abs()
        }
        Err(_) => fail(),
    }
}

/// Percent distance change from `z_k` to `z_k1`; undefined for `z_k = 0`.
pub fn relative_change(z_k: f64, z_k1: f64) -> Option<f64> {
    if z_k == 0.0 {
        None
    } else {
        Some((z_k1 - z_k) / z_k * 100.0)
    }
}

/// Result of one optimization at a fixed harmonic count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub k: usize,
    pub trial: usize,
    pub best_vector: Vec<f64>,
    pub best_cost: f64,
    pub distance: f64,
    pub evaluations: usize,
    pub integrator_failures: usize,
    pub liftoff_runs: usize,
    pub wall_time_s: f64,
}

/// Per-harmonic-count statistics across trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSummary {
    pub k: usize,
    pub trials: usize,
    pub mean_distance: f64,
    /// Sample standard deviation (n - 1); zero for a single trial.
    pub sd: f64,
    /// Percent change of the mean distance versus the previous harmonic
    /// count, absent for the first row.
    pub relative_change_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignRecord {
    pub mode: CampaignMode,
    pub base_seed: u64,
    pub trials: Vec<TrialRecord>,
    pub summaries: Vec<KSummary>,
    pub best: TrialRecord,
    /// Trial-level failures (partial campaigns still report the rest).
    pub failures: Vec<String>,
}

fn sample_sd(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Aggregates per-trial records into table rows: mean and sample SD of the
/// distance per harmonic count, plus the percent change between consecutive
/// counts.
pub fn summarize(trials: &[TrialRecord]) -> Vec<KSummary> {
    let mut ks: Vec<usize> = trials.iter().map(|t| t.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut out = Vec::with_capacity(ks.len());
    let mut prev_mean: Option<f64> = None;
    for k in ks {
        let distances: Vec<f64> = trials.iter().filter(|t| t.k == k).map(|t| t.distance).collect();
        let mean = distances.iter().sum::<f64>() / distances.len() as f64;
        let sd = sample_sd(&distances, mean);
        let relative_change_pct = prev_mean.and_then(|p| relative_change(p, mean));
        out.push(KSummary {
            k,
            trials: distances.len(),
            mean_distance: mean,
            sd,
            relative_change_pct,
        });
        prev_mean = Some(mean);
    }
    out
}

fn best_record(trials: &[TrialRecord]) -> TrialRecord {
    trials
        .iter()
        .max_by(|a, b| a.distance.partial_cmp(&b.distance).expect("finite distances"))
        .expect("at least one trial record")
        .clone()
}

fn run_single(
    config: &CampaignConfig,
    k: usize,
    trial: usize,
    seeds: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<TrialRecord, CampaignError> {
    let diagnostics = CostDiagnostics::default();
    let objective = |v: &[f64]| evaluate_cost_counted(v, k, config, Some(&diagnostics));
    let bounds = config.decision_bounds(k);
    let started = Instant::now();
    let result = optimize_with_rng(
        &objective,
        &bounds,
        &config.de,
        seeds,
        rng,
        config.base_seed + trial as u64,
    )?;
    Ok(TrialRecord {
        k,
        trial,
        distance: -result.best_cost,
        best_vector: result.best_vector,
        best_cost: result.best_cost,
        evaluations: result.evaluation_count,
        integrator_failures: diagnostics.failures.load(Ordering::Relaxed),
        liftoff_runs: diagnostics.liftoff_runs.load(Ordering::Relaxed),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn run_trials(
    config: &CampaignConfig,
    trial_body: impl Fn(usize, &mut ChaCha8Rng) -> Result<Vec<TrialRecord>, CampaignError> + Sync,
) -> Result<CampaignRecord, CampaignError> {
    config.validate()?;
    let outcomes: Vec<(usize, Result<Vec<TrialRecord>, String>)> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.base_seed + trial as u64);
            (trial, trial_body(trial, &mut rng).map_err(|e| e.to_string()))
        })
        .collect();

    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (trial, outcome) in outcomes {
        match outcome {
            Ok(records) => trials.extend(records),
            Err(message) => failures.push(format!("trial {trial}: {message}")),
        }
    }
    if trials.is_empty() {
        return Err(CampaignError::BadConfig(
            failures.first().cloned().unwrap_or_else(|| "no trials produced records".into()),
        ));
    }
    let summaries = summarize(&trials);
    let best = best_record(&trials);
    Ok(CampaignRecord { mode: config.mode, base_seed: config.base_seed, trials, summaries, best, failures })
}

/// Every harmonic count optimized independently from random populations.
pub fn run_noniterative(config: &CampaignConfig) -> Result<CampaignRecord, CampaignError> {
    run_trials(config, |trial, rng| {
        let mut records = Vec::with_capacity(config.k_max - config.k_min + 1);
        for k in config.k_min..=config.k_max {
            records.push(run_single(config, k, trial, &[], rng)?);
        }
        Ok(records)
    })
}

/// Harmonic continuation: each count after the first is seeded with the
/// exactly extended previous optimum, so per-trial distances are
/// non-decreasing in `K`. Chains stop early when the gain falls below the
/// configured threshold.
pub fn run_iterative(config: &CampaignConfig) -> Result<CampaignRecord, CampaignError> {
    run_trials(config, |trial, rng| {
        let mut records = Vec::with_capacity(config.k_max - config.k_min + 1);
        let mut seeds: Vec<Vec<f64>> = Vec::new();
        let mut previous_distance: Option<f64> = None;
        for k in config.k_min..=config.k_max {
            let record = run_single(config, k, trial, &seeds, rng)?;
            let distance = record.distance;
            records.push(record);

            let stalled =
                previous_distance.is_some_and(|prev| distance - prev < config.improvement_threshold);
            previous_distance = Some(distance);
            if stalled && k < config.k_max {
                break;
            }
            if k < config.k_max {
                let (shape, span) = decision_to_control(&records.last().unwrap().best_vector, k)
                    .expect("optimizer returns in-bounds vectors");
                let extended = extend_harmonics(&shape);
                let exact = control_to_decision(&extended, span);
                // The exact extension goes first; companions scattered
                // around it give the difference-vector mutation basin-sized
                // steps to refine with.
                let bounds = config.decision_bounds(k + 1);
                seeds = vec![exact.clone()];
                for _ in 0..config.warm_start_companions {
                    let companion: Vec<f64> = exact
                        .iter()
                        .enumerate()
                        .map(|(j, v)| {
                            let width = bounds.upper[j] - bounds.lower[j];
                            (v + rng.random_range(-1.0..=1.0) * config.warm_start_jitter * width)
                                .clamp(bounds.lower[j], bounds.upper[j])
                        })
                        .collect();
                    seeds.push(companion);
                }
            }
        }
        Ok(records)
    })
}

/// Dispatch on the configured mode.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignRecord, CampaignError> {
    match config.mode {
        CampaignMode::NonIterative => run_noniterative(config),
        CampaignMode::Iterative => run_iterative(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn quick_config() -> CampaignConfig {
        CampaignConfig {
            k_min: 2,
            k_max: 3,
            trials: 2,
            de: DeConfig {
                population_size: Some(8),
                max_generations: 4,
                rng_seed: 0,
                ..Default::default()
            },
            base_seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn relative_change_examples() {
        let ten = relative_change(5.0, 5.5).unwrap();
        assert!((ten - 10.0).abs() < 1e-12);
        let delta = relative_change(4.946, 5.663).unwrap();
        assert!((delta - 14.497).abs() < 0.01, "{delta}");
        assert_eq!(relative_change(3.0, 3.0), Some(0.0));
        assert_eq!(relative_change(0.0, 1.0), None);
    }

    #[test]
    fn summary_two_point_sd() {
        let rec = |k: usize, trial: usize, distance: f64| TrialRecord {
            k,
            trial,
            best_vector: vec![],
            best_cost: -distance,
            distance,
            evaluations: 0,
            integrator_failures: 0,
            liftoff_runs: 0,
            wall_time_s: 0.0,
        };
        let rows = summarize(&[rec(2, 0, 4.9), rec(2, 1, 5.0), rec(3, 0, 5.5), rec(3, 1, 5.6)]);
        assert_eq!(rows.len(), 2);
        assert!((rows[0].mean_distance - 4.95).abs() < 1e-12);
        assert!((rows[0].sd - 0.05f64 * 2.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(rows[0].relative_change_pct, None);
        let delta = rows[1].relative_change_pct.unwrap();
        assert!((delta - (5.55 - 4.95) / 4.95 * 100.0).abs() < 1e-12);

        let single = summarize(&[rec(2, 0, 4.9)]);
        assert_eq!(single[0].sd, 0.0);
        assert_eq!(single[0].trials, 1);
    }

    #[test]
    fn near_zero_control_costs_nothing() {
        // p halfway with q at the floor squeezes the control to ~0, which
        // cannot break static friction: the capsule never moves.
        let config = CampaignConfig::default();
        let v = vec![1.0, 1.0, 1.0, 1.0, 0.5, 1e-6];
        let cost = evaluate_cost(&v, 2, &config);
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn invalid_vector_costs_infinity() {
        let config = CampaignConfig::default();
        let v = vec![-1.0, 0.0, 0.0, 1.0, 0.5, 0.5];
        assert_eq!(evaluate_cost(&v, 2, &config), f64::INFINITY);
    }

    #[test]
    fn extension_preserves_cost() {
        let config = CampaignConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in [1usize, 2, 3] {
            let bounds = config.decision_bounds(k);
            let v: Vec<f64> = (0..bounds.dim())
                .map(|j| rng.random_range(bounds.lower[j]..=bounds.upper[j]))
                .collect();
            let (shape, span) = decision_to_control(&v, k).unwrap();
            let extended = control_to_decision(&extend_harmonics(&shape), span);
            let base = evaluate_cost(&v, k, &config);
            let lifted = evaluate_cost(&extended, k + 1, &config);
            assert!((base - lifted).abs() < 1e-9, "k = {k}: {base} vs {lifted}");
        }
    }

    #[test]
    fn decision_roundtrip() {
        let shape = ControlShape::new(vec![0.3, 1.2, 4.0], 2.5).unwrap();
        let span = SpanParams::new(0.7, 0.2).unwrap();
        let v = control_to_decision(&shape, span);
        assert_eq!(v.len(), 2 * 2 + 2);
        let (shape2, span2) = decision_to_control(&v, 2).unwrap();
        assert_eq!(shape, shape2);
        assert_eq!(span, span2);
    }

    #[test]
    fn campaign_is_deterministic() {
        let config = quick_config();
        let a = run_campaign(&config).unwrap();
        let b = run_campaign(&config).unwrap();
        assert_eq!(a.trials.len(), b.trials.len());
        for (x, y) in a.trials.iter().zip(&b.trials) {
            assert_eq!(x.k, y.k);
            assert_eq!(x.trial, y.trial);
            assert_eq!(x.best_vector, y.best_vector);
            assert_eq!(x.best_cost, y.best_cost);
            assert_eq!(x.evaluations, y.evaluations);
        }
        assert_eq!(a.summaries, b.summaries);
    }

    #[test]
    fn iterative_distances_never_drop() {
        let config = CampaignConfig {
            mode: CampaignMode::Iterative,
            improvement_threshold: -1.0,
            trials: 1,
            k_min: 2,
            k_max: 4,
            de: DeConfig { population_size: Some(10), max_generations: 6, ..Default::default() },
            base_seed: 7,
            ..Default::default()
        };
        let record = run_campaign(&config).unwrap();
        let distances: Vec<f64> = record.trials.iter().map(|t| t.distance).collect();
        assert_eq!(distances.len(), 3);
        for w in distances.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{distances:?}");
        }
    }

    #[test]
    fn noniterative_runs_all_counts() {
        let config = CampaignConfig { mode: CampaignMode::NonIterative, ..quick_config() };
        let record = run_campaign(&config).unwrap();
        assert_eq!(record.trials.len(), 2 * 2);
        assert_eq!(record.summaries.len(), 2);
        assert_eq!(record.summaries[0].trials, 2);
        let best = record.trials.iter().map(|t| t.distance).fold(f64::MIN, f64::max);
        assert_eq!(record.best.distance, best);
    }

    #[test]
    fn config_violations_are_collected() {
        let config = CampaignConfig {
            k_min: 5,
            k_max: 3,
            span_ceiling: 1.5,
            ..CampaignConfig::default()
        };
        let violations = config.violations();
        assert!(violations.iter().any(|v| v.contains("k_min")));
        assert!(violations.iter().any(|v| v.contains("span_ceiling")));
        assert!(run_campaign(&config).is_err());
    }
}
