//! Differential Evolution over box-bounded real vectors.
//!
//! Classic DE/rand/1/bin with greedy one-to-one selection. The initial
//! population is uniform random in the box; caller-supplied seed members
//! then overwrite the first slots. Because selection only ever replaces a
//! member with a trial of equal or lower cost, the best cost is
//! non-increasing and never exceeds the cheapest seed — the property the
//! warm-started harmonic continuation relies on.
//!
//! Objective evaluations within a generation may run in parallel; trial
//! construction and selection are sequential and consume the RNG in a fixed
//! order, so results do not depend on evaluation scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed when clipping marginally out-of-bounds seed members.
const SEED_CLIP_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("bounds arrays differ in length: {lower} vs {upper}")]
    BoundsMismatch { lower: usize, upper: usize },
    #[error("bound {index} inverted: [{lower}, {upper}]")]
    InvalidBound { index: usize, lower: f64, upper: f64 },
    #[error("bounds must be non-empty")]
    EmptyBounds,
    #[error("seed member {index} has dimension {got}, expected {expected}")]
    SeedDimension { index: usize, got: usize, expected: usize },
    #[error("seed member {index} component {component} = {value} is outside the bounds")]
    SeedOutOfBounds { index: usize, component: usize, value: f64 },
    #[error("invalid optimizer configuration: {0}")]
    BadConfig(&'static str),
}

/// Per-dimension box constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, OptimizerError> {
        if lower.len() != upper.len() {
            return Err(OptimizerError::BoundsMismatch { lower: lower.len(), upper: upper.len() });
        }
        if lower.is_empty() {
            return Err(OptimizerError::EmptyBounds);
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(OptimizerError::InvalidBound { index: i, lower: *lo, upper: *hi });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    fn sample_component(&self, j: usize, rng: &mut ChaCha8Rng) -> f64 {
        if self.lower[j] == self.upper[j] {
            self.lower[j]
        } else {
            rng.random_range(self.lower[j]..=self.upper[j])
        }
    }
}

/// Mutation factor: fixed, or re-drawn uniformly once per generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    Fixed(f64),
    Dither { min: f64, max: f64 },
}

impl Default for Mutation {
    fn default() -> Self {
        Mutation::Dither { min: 0.5, max: 1.0 }
    }
}

impl Mutation {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Mutation::Fixed(f) => f,
            Mutation::Dither { min, max } => {
                if min == max {
                    min
                } else {
                    rng.random_range(min..max)
                }
            }
        }
    }

    fn validate(&self) -> Result<(), OptimizerError> {
        let ok = match *self {
            Mutation::Fixed(f) => f.is_finite() && f >= 0.0 && f <= 2.0,
            Mutation::Dither { min, max } => {
                min.is_finite() && max.is_finite() && min >= 0.0 && min <= max && max <= 2.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(OptimizerError::BadConfig("mutation factor must lie in [0, 2]"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeConfig {
    /// Population size; `None` resolves to `15 * dimension` capped at 90.
    pub population_size: Option<usize>,
    pub max_generations: usize,
    pub mutation: Mutation,
    pub crossover_rate: f64,
    pub rng_seed: u64,
    /// Stop after this many consecutive generations whose best-cost
    /// improvement stays below `stagnation_tol`.
    pub stagnation_generations: usize,
    pub stagnation_tol: f64,
    pub parallel_evaluations: bool,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population_size: None,
            max_generations: 300,
            mutation: Mutation::default(),
            crossover_rate: 0.7,
            rng_seed: 0,
            stagnation_generations: 40,
            stagnation_tol: 1e-8,
            parallel_evaluations: true,
        }
    }
}

impl DeConfig {
    pub fn resolved_population(&self, dim: usize) -> usize {
        self.population_size.unwrap_or_else(|| (15 * dim).min(90)).max(4)
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if let Some(np) = self.population_size {
            if np < 4 {
                return Err(OptimizerError::BadConfig(
                    "population_size must be at least 4 (mutation needs 3 distinct others)",
                ));
            }
        }
        if self.max_generations == 0 {
            return Err(OptimizerError::BadConfig("max_generations must be positive"));
        }
        self.mutation.validate()?;
        if !self.crossover_rate.is_finite()
            || !(0.0..=1.0).contains(&self.crossover_rate)
        {
            return Err(OptimizerError::BadConfig("crossover_rate must lie in [0, 1]"));
        }
        if !self.stagnation_tol.is_finite() || self.stagnation_tol < 0.0 {
            return Err(OptimizerError::BadConfig("stagnation_tol must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub best_vector: Vec<f64>,
    pub best_cost: f64,
    /// Best cost after each generation (entry 0 is the initial population).
    pub cost_history: Vec<f64>,
    pub evaluation_count: usize,
    pub rng_seed: u64,
}

fn sanitize(cost: f64) -> f64 {
    if cost.is_finite() {
        cost
    } else {
        f64::INFINITY
    }
}

fn evaluate_all(
    objective: &(impl Fn(&[f64]) -> f64 + Sync),
    members: &[Vec<f64>],
    parallel: bool,
) -> Vec<f64> {
    if parallel {
        members.par_iter().map(|m| sanitize(objective(m))).collect()
    } else {
        members.iter().map(|m| sanitize(objective(m))).collect()
    }
}

fn pick_distinct(rng: &mut ChaCha8Rng, np: usize, exclude: usize) -> (usize, usize, usize) {
    let mut draw = |taken: &[usize]| loop {
        let r = rng.random_range(0..np);
        if r != exclude && !taken.contains(&r) {
            return r;
        }
    };
    let r1 = draw(&[]);
    let r2 = draw(&[r1]);
    let r3 = draw(&[r1, r2]);
    (r1, r2, r3)
}

/// One DE generation: rand/1 mutation, binomial crossover with a forced
/// index, uniform in-bounds resampling of escaped components, greedy
/// selection with ties replaced. Returns the number of objective
/// evaluations performed.
pub fn de_generation(
    objective: &(impl Fn(&[f64]) -> f64 + Sync),
    bounds: &BoxBounds,
    population: &mut [Vec<f64>],
    costs: &mut [f64],
    mutation_factor: f64,
    crossover_rate: f64,
    parallel: bool,
    rng: &mut ChaCha8Rng,
) -> usize {
    let np = population.len();
    let dim = bounds.dim();
    let mut trials: Vec<Vec<f64>> = Vec::with_capacity(np);
    for i in 0..np {
        let (r1, r2, r3) = pick_distinct(rng, np, i);
        let j_rand = rng.random_range(0..dim);
        let mut trial = population[i].clone();
        for j in 0..dim {
            let coin: f64 = rng.random();
            if j == j_rand || coin < crossover_rate {
                let mut v =
                    population[r1][j] + mutation_factor * (population[r2][j] - population[r3][j]);
                if !v.is_finite() || v < bounds.lower[j] || v > bounds.upper[j] {
                    v = bounds.sample_component(j, rng);
                }
                trial[j] = v;
            }
        }
        trials.push(trial);
    }

    let trial_costs = evaluate_all(objective, &trials, parallel);
    for (i, (trial, cost)) in trials.into_iter().zip(trial_costs).enumerate() {
        if cost <= costs[i] {
            population[i] = trial;
            costs[i] = cost;
        }
    }
    np
}

/// Runs DE to completion with the RNG stream derived from `config.rng_seed`.
pub fn optimize(
    objective: &(impl Fn(&[f64]) -> f64 + Sync),
    bounds: &BoxBounds,
    config: &DeConfig,
    seed_members: &[Vec<f64>],
) -> Result<OptimizationResult, OptimizerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    optimize_with_rng(objective, bounds, config, seed_members, &mut rng, config.rng_seed)
}

/// Runs DE on an externally owned RNG stream, so several optimizations can
/// share one stream (an iterative campaign chain) while staying
/// reproducible. `seed_label` is recorded in the result.
pub fn optimize_with_rng(
    objective: &(impl Fn(&[f64]) -> f64 + Sync),
    bounds: &BoxBounds,
    config: &DeConfig,
    seed_members: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
    seed_label: u64,
) -> Result<OptimizationResult, OptimizerError> {
    config.validate()?;
    let dim = bounds.dim();
    let np = config.resolved_population(dim);

    let mut seeds: Vec<Vec<f64>> = Vec::with_capacity(seed_members.len());
    for (idx, member) in seed_members.iter().enumerate() {
        if member.len() != dim {
            return Err(OptimizerError::SeedDimension {
                index: idx,
                got: member.len(),
                expected: dim,
            });
        }
        let mut clipped = member.clone();
        for (j, value) in clipped.iter_mut().enumerate() {
            let (lo, hi) = (bounds.lower[j], bounds.upper[j]);
            if *value < lo - SEED_CLIP_TOL || *value > hi + SEED_CLIP_TOL || !value.is_finite() {
                return Err(OptimizerError::SeedOutOfBounds {
                    index: idx,
                    component: j,
                    value: *value,
                });
            }
            *value = value.clamp(lo, hi);
        }
        seeds.push(clipped);
    }

    let mut population: Vec<Vec<f64>> = (0..np)
        .map(|_| (0..dim).map(|j| bounds.sample_component(j, rng)).collect())
        .collect();
    for (slot, seed) in population.iter_mut().zip(seeds) {
        *slot = seed;
    }

    let mut costs = evaluate_all(objective, &population, config.parallel_evaluations);
    let mut evaluation_count = np;

    let mut best_idx = 0;
    for i in 1..np {
        if costs[i] < costs[best_idx] {
            best_idx = i;
        }
    }
    let mut best_cost = costs[best_idx];
    let mut best_vector = population[best_idx].clone();
    let mut cost_history = vec![best_cost];

    let mut stagnant = 0usize;
    for _ in 0..config.max_generations {
        let f = config.mutation.sample(rng);
        evaluation_count += de_generation(
            objective,
            bounds,
            &mut population,
            &mut costs,
            f,
            config.crossover_rate,
            config.parallel_evaluations,
            rng,
        );

        let prev_best = best_cost;
        for (member, cost) in population.iter().zip(&costs) {
            if *cost < best_cost {
                best_cost = *cost;
                best_vector = member.clone();
            }
        }
        cost_history.push(best_cost);

        if prev_best - best_cost < config.stagnation_tol {
            stagnant += 1;
            if stagnant >= config.stagnation_generations {
                break;
            }
        } else {
            stagnant = 0;
        }
    }

    Ok(OptimizationResult {
        best_vector,
        best_cost,
        cost_history,
        evaluation_count,
        rng_seed: seed_label,
    })
}
