//! Truncated Fourier series control parametrization.
//!
//! A scalar control on `[t0, tf]` is split into two independent parts. The
//! *shape* is a unit amplitude direction on the (2K-1)-sphere together with
//! the fundamental frequency `omega` and the harmonic count `K`; it fixes
//! everything about the signal that is invariant under shifting and positive
//! scaling. The *span* places the signal's range inside the admissible
//! interval `[m, M]` through two scalars `p, q` in `(0, 1]`: after the shape
//! polynomial is normalized to `[0, 1]`, the control becomes
//!
//! ```text
//! u(t) = m + p(1 - q)(M - m) + u_norm(t) (M - m) p q
//! ```
//!
//! whose maximum is `m + p(M - m)` and minimum `m + p(1 - q)(M - m)`, so the
//! result is admissible for every parameter choice.
//!
//! Extending a shape from `K` to `K + 1` harmonics ([`extend_harmonics`])
//! reproduces the original signal exactly: the two new amplitudes are zero
//! and the existing ones are untouched. That exactness is what lets an
//! optimization at `K + 1` be warm-started from the optimum at `K` without
//! losing any attained cost.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Variation threshold under which the raw shape is treated as constant.
const DEGENERATE_VARIATION: f64 = 1e-12;
/// Golden-section tolerance on the extremum location (in `t`).
const REFINE_TOL: f64 = 1e-10;
/// Grid samples per scanned window when locating shape extrema.
pub const DEFAULT_GRID_POINTS: usize = 8192;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("angle count must be odd and at least 1, got {0}")]
    BadAngleCount(usize),
    #[error("angle {index} = {value} outside its allowed range")]
    AngleOutOfRange { index: usize, value: f64 },
    #[error("fundamental frequency must be positive and finite, got {0}")]
    BadOmega(f64),
    #[error("harmonic count {harmonics} does not match {angles} angles")]
    HarmonicMismatch { harmonics: usize, angles: usize },
    #[error("span parameter {name} = {value} outside (0, 1]")]
    BadSpan { name: &'static str, value: f64 },
    #[error("control bounds must satisfy m < M, got [{lower}, {upper}]")]
    BadBounds { lower: f64, upper: f64 },
    #[error("interval must satisfy tf > t0, got [{t0}, {tf}]")]
    BadInterval { t0: f64, tf: f64 },
    #[error("need at least 2 grid points, got {0}")]
    BadGrid(usize),
    #[error("shape variation {0:e} is below the degeneracy threshold")]
    DegenerateShape(f64),
}

/// Shape of one control channel: hyperspherical angles, fundamental
/// frequency and harmonic count.
///
/// `angles` holds `2K - 1` values; all but the last lie in `[0, pi]`, the
/// last in `[0, 2pi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlShape {
    pub angles: Vec<f64>,
    pub omega: f64,
    pub harmonics: usize,
}

impl ControlShape {
    pub fn new(angles: Vec<f64>, omega: f64) -> Result<Self, ShapeError> {
        let harmonics = (angles.len() + 1) / 2;
        let shape = Self { angles, omega, harmonics };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        if self.angles.is_empty() || self.angles.len() % 2 == 0 {
            return Err(ShapeError::BadAngleCount(self.angles.len()));
        }
        if self.harmonics != (self.angles.len() + 1) / 2 {
            return Err(ShapeError::HarmonicMismatch {
                harmonics: self.harmonics,
                angles: self.angles.len(),
            });
        }
        let last = self.angles.len() - 1;
        for (i, &phi) in self.angles.iter().enumerate() {
            let hi = if i == last { TAU } else { PI };
            if !phi.is_finite() || !(0.0..=hi).contains(&phi) {
                return Err(ShapeError::AngleOutOfRange { index: i, value: phi });
            }
        }
        if !self.omega.is_finite() || self.omega <= 0.0 {
            return Err(ShapeError::BadOmega(self.omega));
        }
        Ok(())
    }

    /// Unit amplitude direction of this shape (length `2K`).
    pub fn direction(&self) -> Vec<f64> {
        direction_from_angles(&self.angles).expect("validated shape")
    }
}

/// Span parameters `p, q` in `(0, 1]` placing the control range inside the
/// admissible interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanParams {
    pub p: f64,
    pub q: f64,
}

impl SpanParams {
    pub fn new(p: f64, q: f64) -> Result<Self, ShapeError> {
        let span = Self { p, q };
        span.validate()?;
        Ok(span)
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        if !self.p.is_finite() || self.p <= 0.0 || self.p > 1.0 {
            return Err(ShapeError::BadSpan { name: "p", value: self.p });
        }
        if !self.q.is_finite() || self.q <= 0.0 || self.q > 1.0 {
            return Err(ShapeError::BadSpan { name: "q", value: self.q });
        }
        Ok(())
    }
}

/// Admissible control interval `[m, M]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    #[serde(rename = "m")]
    pub lower: f64,
    #[serde(rename = "M")]
    pub upper: f64,
}

impl ControlBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self, ShapeError> {
        let bounds = Self { lower, upper };
        bounds.validate()?;
        Ok(bounds)
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        if !self.lower.is_finite() || !self.upper.is_finite() || self.lower >= self.upper {
            return Err(ShapeError::BadBounds { lower: self.lower, upper: self.upper });
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self { lower: -4.0, upper: 4.0 }
    }
}

/// Evaluable truncated Fourier series
/// `a0/2 + sum_k a_k cos(k omega t) + b_k sin(k omega t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierControl {
    pub a0: f64,
    #[serde(rename = "a")]
    pub cosine_amps: Vec<f64>,
    #[serde(rename = "b")]
    pub sine_amps: Vec<f64>,
    pub omega: f64,
    pub harmonics: usize,
}

impl FourierControl {
    /// Constant signal carried in Fourier form (all harmonic amplitudes zero).
    pub fn constant(value: f64, omega: f64, harmonics: usize) -> Self {
        Self {
            a0: 2.0 * value,
            cosine_amps: vec![0.0; harmonics],
            sine_amps: vec![0.0; harmonics],
            omega,
            harmonics,
        }
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        if self.cosine_amps.len() != self.harmonics || self.sine_amps.len() != self.harmonics {
            return Err(ShapeError::HarmonicMismatch {
                harmonics: self.harmonics,
                angles: self.cosine_amps.len().max(self.sine_amps.len()),
            });
        }
        if !self.omega.is_finite() || self.omega <= 0.0 {
            return Err(ShapeError::BadOmega(self.omega));
        }
        Ok(())
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let mut acc = 0.5 * self.a0;
        if self.cosine_amps.is_empty() {
            return acc;
        }
        let (s1, c1) = (self.omega * t).sin_cos();
        let (mut ck, mut sk) = (c1, s1);
        for (a, b) in self.cosine_amps.iter().zip(&self.sine_amps) {
            acc += a * ck + b * sk;
            let c = ck * c1 - sk * s1;
            let s = sk * c1 + ck * s1;
            ck = c;
            sk = s;
        }
        acc
    }

    /// Sign-flipped copy; drives the plant mirror trajectory.
    pub fn negated(&self) -> Self {
        Self {
            a0: -self.a0,
            cosine_amps: self.cosine_amps.iter().map(|a| -a).collect(),
            sine_amps: self.sine_amps.iter().map(|b| -b).collect(),
            omega: self.omega,
            harmonics: self.harmonics,
        }
    }
}

/// Shift/scale pair mapping the raw shape polynomial onto `[0, 1]`:
/// `u_norm(t) = alpha/2 + beta * shape(t)` attains 0 at the observed minimum
/// and 1 at the observed maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationResult {
    pub alpha: f64,
    pub beta: f64,
    pub observed_min: f64,
    pub observed_max: f64,
}

/// Maps `2K - 1` hyperspherical angles to a unit vector in `R^{2K}`.
///
/// Component `i` is `cos(phi_i)` times the product of `sin(phi_j)` for all
/// `j < i`; the final component is the full sine product.
pub fn direction_from_angles(angles: &[f64]) -> Result<Vec<f64>, ShapeError> {
    if angles.is_empty() || angles.len() % 2 == 0 {
        return Err(ShapeError::BadAngleCount(angles.len()));
    }
    let mut dir = vec![0.0; angles.len() + 1];
    let mut sin_prod = 1.0;
    for (i, &phi) in angles.iter().enumerate() {
        let (s, c) = phi.sin_cos();
        dir[i] = sin_prod * c;
        sin_prod *= s;
    }
    dir[angles.len()] = sin_prod;
    Ok(dir)
}

/// Raw shape polynomial
/// `sum_k dir[2k-2] cos(k omega t) + dir[2k-1] sin(k omega t)`.
///
/// `direction` must have even length; unit norm is the caller's contract.
pub fn shape_value(direction: &[f64], omega: f64, t: f64) -> f64 {
    debug_assert!(direction.len() % 2 == 0 && !direction.is_empty());
    let (s1, c1) = (omega * t).sin_cos();
    let (mut ck, mut sk) = (c1, s1);
    let mut acc = 0.0;
    for pair in direction.chunks_exact(2) {
        acc += pair[0] * ck + pair[1] * sk;
        let c = ck * c1 - sk * s1;
        let s = sk * c1 + ck * s1;
        ck = c;
        sk = s;
    }
    acc
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    const INVPHI2: f64 = 0.381_966_011_250_105_1;
    let mut h = b - a;
    let mut c = a + INVPHI2 * h;
    let mut d = a + INVPHI * h;
    let mut yc = f(c);
    let mut yd = f(d);
    while h > tol {
        if yc < yd {
            b = d;
            d = c;
            yd = yc;
            h = b - a;
            c = a + INVPHI2 * h;
            yc = f(c);
        } else {
            a = c;
            c = d;
            yc = yd;
            h = b - a;
            d = a + INVPHI * h;
            yd = f(d);
        }
    }
    yc.min(yd).min(f(0.5 * (a + b)))
}

/// Finds the shift/scale mapping an arbitrary sampled function onto `[0, 1]`.
///
/// The extrema are located on a uniform grid and polished by golden-section
/// search to `1e-10` in `t`. When `period` is given and shorter than the
/// interval, one full period is scanned instead of the whole interval: the
/// function attains every one of its values there, so the extrema agree.
pub fn fit_unit_range(
    f: impl Fn(f64) -> f64,
    t0: f64,
    tf: f64,
    period: Option<f64>,
    grid_points: usize,
) -> Result<NormalizationResult, ShapeError> {
    if tf <= t0 {
        return Err(ShapeError::BadInterval { t0, tf });
    }
    if grid_points < 2 {
        return Err(ShapeError::BadGrid(grid_points));
    }
    let span = tf - t0;
    let (window, periodic) = match period {
        Some(p) if p.is_finite() && p > 0.0 && p < span => (p, true),
        _ => (span, false),
    };
    let n = grid_points;
    let dt = window / n as f64;
    let samples = if periodic { n } else { n + 1 };

    let mut min_i = 0usize;
    let mut max_i = 0usize;
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for i in 0..samples {
        let v = f(t0 + i as f64 * dt);
        if v < min_v {
            min_v = v;
            min_i = i;
        }
        if v > max_v {
            max_v = v;
            max_i = i;
        }
    }

    let bracket = |i: usize| -> (f64, f64) {
        if periodic {
            // The polynomial is defined everywhere, so the bracket may step
            // outside the scanned window.
            let c = t0 + i as f64 * dt;
            (c - dt, c + dt)
        } else {
            let lo = if i == 0 { t0 } else { t0 + (i - 1) as f64 * dt };
            let hi = if i == samples - 1 { tf } else { t0 + (i + 1) as f64 * dt };
            (lo, hi)
        }
    };

    let (lo, hi) = bracket(min_i);
    let refined_min = golden_min(&|t| f(t), lo, hi, REFINE_TOL).min(min_v);
    let (lo, hi) = bracket(max_i);
    let refined_max = (-golden_min(&|t| -f(t), lo, hi, REFINE_TOL)).max(max_v);

    let variation = refined_max - refined_min;
    if !(variation > DEGENERATE_VARIATION) {
        return Err(ShapeError::DegenerateShape(variation));
    }
    Ok(NormalizationResult {
        alpha: -2.0 * refined_min / variation,
        beta: 1.0 / variation,
        observed_min: refined_min,
        observed_max: refined_max,
    })
}

/// Normalizes the shape polynomial of `direction` over `[t0, tf]` so that
/// `alpha/2 + beta * shape(t)` has range `[0, 1]`.
pub fn normalize_shape(
    direction: &[f64],
    omega: f64,
    t0: f64,
    tf: f64,
    grid_points: usize,
) -> Result<NormalizationResult, ShapeError> {
    if !omega.is_finite() || omega <= 0.0 {
        return Err(ShapeError::BadOmega(omega));
    }
    fit_unit_range(
        |t| shape_value(direction, omega, t),
        t0,
        tf,
        Some(TAU / omega),
        grid_points,
    )
}

/// Places the normalized shape inside `[m, M]` and assembles the Fourier
/// coefficients: the constant term absorbs the shift, the harmonic
/// amplitudes the scale.
pub fn apply_span(
    direction: &[f64],
    omega: f64,
    norm: &NormalizationResult,
    span: SpanParams,
    bounds: ControlBounds,
) -> FourierControl {
    let width = bounds.width();
    let offset = bounds.lower + span.p * (1.0 - span.q) * width;
    let scale = width * span.p * span.q;
    let a0 = 2.0 * offset + norm.alpha * scale;
    let gain = norm.beta * scale;
    let harmonics = direction.len() / 2;
    let mut cosine_amps = Vec::with_capacity(harmonics);
    let mut sine_amps = Vec::with_capacity(harmonics);
    for pair in direction.chunks_exact(2) {
        cosine_amps.push(gain * pair[0]);
        sine_amps.push(gain * pair[1]);
    }
    FourierControl { a0, cosine_amps, sine_amps, omega, harmonics }
}

/// Full pipeline: angles -> unit direction -> normalization -> span.
///
/// A degenerate (constant) shape falls back to `u_norm = 1/2`, which keeps
/// the span formula well defined and yields a constant admissible control.
pub fn build_control(
    shape: &ControlShape,
    span: SpanParams,
    bounds: ControlBounds,
    t0: f64,
    tf: f64,
) -> Result<FourierControl, ShapeError> {
    shape.validate()?;
    span.validate()?;
    bounds.validate()?;
    let direction = shape.direction();
    match normalize_shape(&direction, shape.omega, t0, tf, DEFAULT_GRID_POINTS) {
        Ok(norm) => Ok(apply_span(&direction, shape.omega, &norm, span, bounds)),
        Err(ShapeError::DegenerateShape(_)) => {
            let width = bounds.width();
            let value = bounds.lower + span.p * (1.0 - span.q) * width + 0.5 * width * span.p * span.q;
            Ok(FourierControl::constant(value, shape.omega, shape.harmonics))
        }
        Err(e) => Err(e),
    }
}

/// Exact warm-start extension from `K` to `K + 1` harmonics.
///
/// Keeps the first `2K - 2` angles; the last angle is reflected to
/// `2pi - phi` with a compensating `pi` when it exceeds `pi` (so its cosine
/// is preserved and the sign flip of its sine is undone), then two new
/// angles pin the added amplitude pair to zero. The resulting direction is
/// the old one followed by `(0, 0)`.
pub fn extend_harmonics(shape: &ControlShape) -> ControlShape {
    let mut angles = shape.angles.clone();
    let last = angles.len() - 1;
    if angles[last] <= PI {
        angles.push(0.0);
    } else {
        angles[last] = TAU - angles[last];
        angles.push(PI);
    }
    angles.push(0.0);
    ControlShape { angles, omega: shape.omega, harmonics: shape.harmonics + 1 }
}
