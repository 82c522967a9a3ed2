//! Adaptive integration of piecewise-smooth systems with event handling.
//!
//! The stepper is the Dormand-Prince embedded 5(4) pair. Within one contact
//! mode the vector field is smooth and steps are controlled by the usual
//! mixed absolute/relative error test. Mode changes are detected by a sign
//! change of the active event functions across an accepted step and located
//! by bisection, re-integrating the sub-step from the step's start on each
//! probe; the transition map is then applied and integration continues in
//! the new mode.
//!
//! Everything here is deterministic: the same inputs produce bit-identical
//! trajectories, which downstream code relies on (warm-started optimizations
//! must reproduce seed costs exactly).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Butcher tableau of the Dormand-Prince 5(4) pair.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights (identical to the last tableau row).
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
/// Error weights: difference between the 5th- and 4th-order solutions.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
/// Hard cap on mode transitions per integration.
const MAX_EVENTS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    Stiffness { t: f64, h: f64 },
    #[error("event storm: more than {0} mode transitions")]
    EventStorm(usize),
    #[error("event function has no sign change over [{a}, {b}]")]
    NoSignChange { a: f64, b: f64 },
    #[error("invalid integration span [{t0}, {tf}]")]
    BadSpan { t0: f64, tf: f64 },
    #[error("invalid integrator configuration: {0}")]
    BadConfig(&'static str),
}

/// Step-size and event-location tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub event_tol_time: f64,
    pub max_event_bisections: u32,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-12,
            initial_step: 1e-3,
            max_step: 0.1,
            event_tol_time: 1e-12,
            max_event_bisections: 128,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegrationError> {
        let positive = [
            self.abs_tol,
            self.rel_tol,
            self.initial_step,
            self.max_step,
            self.event_tol_time,
        ];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(IntegrationError::BadConfig("all tolerances and steps must be positive"));
        }
        if self.max_event_bisections < 1 {
            return Err(IntegrationError::BadConfig("max_event_bisections must be at least 1"));
        }
        Ok(())
    }
}

/// A piecewise-smooth system: per-mode vector field, per-mode event
/// functions, and a transition map applied where an event fires. The scalar
/// control input is threaded through explicitly so one system value can be
/// driven by many different control signals concurrently.
pub trait HybridSystem<const N: usize> {
    type Mode: Copy + PartialEq + std::fmt::Debug;

    fn derivative(&self, mode: Self::Mode, t: f64, state: &[f64; N], u: f64) -> [f64; N];

    /// Number of event functions active in `mode`.
    fn event_count(&self, mode: Self::Mode) -> usize;

    /// Validity margin of event function `event`: nonnegative while `mode`
    /// persists, negative once the mode's defining condition is violated.
    /// The margin may start a fresh arc at exactly zero (a mode entered at
    /// its boundary); the transition fires where it turns negative.
    fn event_value(&self, mode: Self::Mode, event: usize, t: f64, state: &[f64; N], u: f64)
        -> f64;

    fn apply_transition(
        &self,
        mode: Self::Mode,
        event: usize,
        t: f64,
        state: &[f64; N],
        u: f64,
    ) -> (Self::Mode, [f64; N]);

    /// Diagnostic predicate evaluated at every recorded sample; flagged
    /// samples are counted in the trajectory.
    fn flag_step(&self, _mode: Self::Mode, _t: f64, _state: &[f64; N], _u: f64) -> bool {
        false
    }
}

/// One logged mode transition; `state` is the pre-transition state at the
/// located event time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord<M, const N: usize> {
    pub time: f64,
    pub from: M,
    pub to: M,
    pub state: [f64; N],
}

/// Dense record of one integration: samples at every accepted step and
/// event, plus the event log.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<M, const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<[f64; N]>,
    pub modes: Vec<M>,
    pub events: Vec<EventRecord<M, N>>,
    pub flagged_samples: usize,
}

impl<M: Copy, const N: usize> Trajectory<M, N> {
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn final_state(&self) -> [f64; N] {
        *self.states.last().expect("non-empty trajectory")
    }

    pub fn final_mode(&self) -> M {
        *self.modes.last().expect("non-empty trajectory")
    }
}

/// Terminal summary of an integration when the full sample record is not
/// needed (optimization inner loops).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalState<M, const N: usize> {
    pub time: f64,
    pub state: [f64; N],
    pub mode: M,
    pub event_count: usize,
    pub flagged_samples: usize,
}

/// Result of one embedded step attempt.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome<const N: usize> {
    pub state: [f64; N],
    /// Scaled error norm; at most 1 means the step passes the tolerance test.
    pub error_norm: f64,
    pub suggested_step: f64,
}

/// One Dormand-Prince 5(4) step from `(t, state)` over `h > 0`.
///
/// The error norm is `max_i |err_i| / (abs_tol + rel_tol * max(|y_i|,
/// |y_new_i|))`; the suggested step uses the standard fifth-root controller
/// with safety factor 0.9 clamped to [0.2, 5] times the current step.
pub fn rk45_step<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    state: &[f64; N],
    h: f64,
    config: &IntegratorConfig,
) -> StepOutcome<N> {
    debug_assert!(h > 0.0);
    let mut k = [[0.0; N]; 7];
    k[0] = f(t, state);
    for stage in 1..7 {
        let mut y = *state;
        for (j, kj) in k.iter().enumerate().take(stage) {
            let a = A[stage][j];
            if a != 0.0 {
                for i in 0..N {
                    y[i] += h * a * kj[i];
                }
            }
        }
        k[stage] = f(t + C[stage] * h, &y);
    }

    let mut new_state = *state;
    for (j, kj) in k.iter().enumerate() {
        if B5[j] != 0.0 {
            for i in 0..N {
                new_state[i] += h * B5[j] * kj[i];
            }
        }
    }

    let mut error_norm: f64 = 0.0;
    for i in 0..N {
        let mut err = 0.0;
        for (j, kj) in k.iter().enumerate() {
            err += E[j] * kj[i];
        }
        err *= h;
        let scale = config.abs_tol + config.rel_tol * state[i].abs().max(new_state[i].abs());
        error_norm = error_norm.max((err / scale).abs());
    }

    let factor = if error_norm == 0.0 {
        MAX_FACTOR
    } else {
        (SAFETY * error_norm.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
    };
    StepOutcome { state: new_state, error_norm, suggested_step: h * factor }
}

/// Fifth-order solution only, for re-integrating event sub-steps.
fn rk5_advance<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    state: &[f64; N],
    h: f64,
) -> [f64; N] {
    if h == 0.0 {
        return *state;
    }
    let mut k = [[0.0; N]; 7];
    k[0] = f(t, state);
    for stage in 1..7 {
        let mut y = *state;
        for (j, kj) in k.iter().enumerate().take(stage) {
            let a = A[stage][j];
            if a != 0.0 {
                for i in 0..N {
                    y[i] += h * a * kj[i];
                }
            }
        }
        k[stage] = f(t + C[stage] * h, &y);
    }
    let mut out = *state;
    for (j, kj) in k.iter().enumerate() {
        if B5[j] != 0.0 {
            for i in 0..N {
                out[i] += h * B5[j] * kj[i];
            }
        }
    }
    out
}

/// Bisection root localization of a scalar function of time over `[t_a,
/// t_b]`. Requires a sign change (or a zero at either endpoint, which is
/// returned directly); the result is within `event_tol_time` of the crossing.
pub fn locate_event(
    event_fn: impl Fn(f64) -> f64,
    t_a: f64,
    t_b: f64,
    config: &IntegratorConfig,
) -> Result<f64, IntegrationError> {
    let ga = event_fn(t_a);
    if ga == 0.0 {
        return Ok(t_a);
    }
    let gb = event_fn(t_b);
    if gb == 0.0 {
        return Ok(t_b);
    }
    if (ga > 0.0) == (gb > 0.0) {
        return Err(IntegrationError::NoSignChange { a: t_a, b: t_b });
    }
    let mut lo = t_a;
    let mut hi = t_b;
    for _ in 0..config.max_event_bisections {
        if hi - lo <= config.event_tol_time {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let gm = event_fn(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if (gm > 0.0) == (ga > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A step endpoint triggers the event when the margin leaves the valid
/// (nonnegative) side, or touches zero coming from strictly inside. An arc
/// that starts exactly on its boundary (margin zero) therefore does not
/// re-trigger until it actually turns invalid.
fn crossed(g_prev: f64, g_new: f64) -> bool {
    (g_prev >= 0.0 && g_new < 0.0) || (g_prev > 0.0 && g_new == 0.0)
}

struct EventHit<const N: usize> {
    index: usize,
    time: f64,
    state: [f64; N],
}

/// Integrates a hybrid system from `t0` to `tf`, recording every sample
/// through `sink` and returning events plus diagnostics.
fn integrate_core<S: HybridSystem<N>, const N: usize>(
    system: &S,
    state0: [f64; N],
    mode0: S::Mode,
    t0: f64,
    tf: f64,
    config: &IntegratorConfig,
    control: &impl Fn(f64) -> f64,
    sink: &mut impl FnMut(f64, &[f64; N], S::Mode),
) -> Result<(Vec<EventRecord<S::Mode, N>>, usize, f64, [f64; N], S::Mode), IntegrationError> {
    if !(tf > t0) {
        return Err(IntegrationError::BadSpan { t0, tf });
    }
    config.validate()?;

    let mut t = t0;
    let mut y = state0;
    let mut mode = mode0;
    let mut events: Vec<EventRecord<S::Mode, N>> = Vec::new();
    let mut transitions = 0usize;
    let mut flagged = 0usize;

    let record =
        |t: f64, y: &[f64; N], mode: S::Mode, flagged: &mut usize, sink: &mut dyn FnMut(f64, &[f64; N], S::Mode)| {
            if system.flag_step(mode, t, y, control(t)) {
                *flagged += 1;
            }
            sink(t, y, mode);
        };
    record(t, &y, mode, &mut flagged, sink);

    let mut g_prev: Vec<f64> = (0..system.event_count(mode))
        .map(|e| system.event_value(mode, e, t, &y, control(t)))
        .collect();
    let mut g_new: Vec<f64> = Vec::with_capacity(g_prev.len());

    let mut h = config.initial_step.min(config.max_step).min(tf - t0);

    while t < tf {
        let underflow = 1e-14 * t.abs().max(1.0);
        if tf - t <= underflow {
            break;
        }
        h = h.min(config.max_step).min(tf - t);
        if h < underflow {
            return Err(IntegrationError::Stiffness { t, h });
        }

        let deriv = |tt: f64, yy: &[f64; N]| system.derivative(mode, tt, yy, control(tt));
        let step = rk45_step(&deriv, t, &y, h, config);
        if step.error_norm > 1.0 {
            h = step.suggested_step;
            continue;
        }

        let t_end = t + h;
        g_new.clear();
        for e in 0..g_prev.len() {
            g_new.push(system.event_value(mode, e, t_end, &step.state, control(t_end)));
        }

        let mut hit: Option<EventHit<N>> = None;
        for e in 0..g_prev.len() {
            if !crossed(g_prev[e], g_new[e]) {
                continue;
            }
            let located = bisect_event(system, mode, e, t, &y, t_end, &step.state, config, control);
            match &hit {
                Some(best) if best.time <= located.time => {}
                _ => hit = Some(located),
            }
        }

        if let Some(hit) = hit {
            let u_ev = control(hit.time);
            let (next_mode, next_state) =
                system.apply_transition(mode, hit.index, hit.time, &hit.state, u_ev);
            transitions += 1;
            if transitions > MAX_EVENTS {
                return Err(IntegrationError::EventStorm(MAX_EVENTS));
            }
            // Boundary grazes can re-dispatch into the same mode (with the
            // state snapped); only actual mode changes are logged.
            if next_mode != mode {
                events.push(EventRecord { time: hit.time, from: mode, to: next_mode, state: hit.state });
            }
            t = hit.time;
            y = next_state;
            mode = next_mode;
            record(t, &y, mode, &mut flagged, sink);
            g_prev.clear();
            for e in 0..system.event_count(mode) {
                g_prev.push(system.event_value(mode, e, t, &y, control(t)));
            }
            // Fresh arcs restart with a short step so structure right after
            // the transition is not skipped.
            h = step.suggested_step.min(config.initial_step);
            continue;
        }

        t = t_end;
        y = step.state;
        std::mem::swap(&mut g_prev, &mut g_new);
        record(t, &y, mode, &mut flagged, sink);
        h = step.suggested_step;
    }

    Ok((events, flagged, t, y, mode))
}

/// Bisects the point where the margin turns invalid inside an accepted
/// step. Each probe re-integrates from the step start with a single
/// fifth-order step, so the located state is consistent with the solution
/// the step controller accepted. Returns the first invalid-side point.
#[allow(clippy::too_many_arguments)]
fn bisect_event<S: HybridSystem<N>, const N: usize>(
    system: &S,
    mode: S::Mode,
    event: usize,
    t_start: f64,
    y_start: &[f64; N],
    t_end: f64,
    y_end: &[f64; N],
    config: &IntegratorConfig,
    control: &impl Fn(f64) -> f64,
) -> EventHit<N> {
    let deriv = |tt: f64, yy: &[f64; N]| system.derivative(mode, tt, yy, control(tt));
    let mut lo = t_start;
    let mut hi = t_end;
    let mut y_hi = *y_end;
    for _ in 0..config.max_event_bisections {
        if hi - lo <= config.event_tol_time {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let y_mid = rk5_advance(&deriv, t_start, y_start, mid - t_start);
        let g_mid = system.event_value(mode, event, mid, &y_mid, control(mid));
        if g_mid >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
            y_hi = y_mid;
        }
    }
    EventHit { index: event, time: hi, state: y_hi }
}

/// Full integration with dense sample recording.
pub fn integrate<S: HybridSystem<N>, const N: usize>(
    system: &S,
    state0: [f64; N],
    mode0: S::Mode,
    t0: f64,
    tf: f64,
    config: &IntegratorConfig,
    control: &impl Fn(f64) -> f64,
) -> Result<Trajectory<S::Mode, N>, IntegrationError> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut modes = Vec::new();
    let (events, flagged_samples, ..) = integrate_core(
        system,
        state0,
        mode0,
        t0,
        tf,
        config,
        control,
        &mut |t, y, m| {
            times.push(t);
            states.push(*y);
            modes.push(m);
        },
    )?;
    Ok(Trajectory { times, states, modes, events, flagged_samples })
}

/// Integration keeping only the terminal state and event statistics.
pub fn propagate<S: HybridSystem<N>, const N: usize>(
    system: &S,
    state0: [f64; N],
    mode0: S::Mode,
    t0: f64,
    tf: f64,
    config: &IntegratorConfig,
    control: &impl Fn(f64) -> f64,
) -> Result<FinalState<S::Mode, N>, IntegrationError> {
    let (events, flagged_samples, time, state, mode) =
        integrate_core(system, state0, mode0, t0, tf, config, control, &mut |_, _, _| {})?;
    Ok(FinalState { time, state, mode, event_count: events.len(), flagged_samples })
}
