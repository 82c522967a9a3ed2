//! Open-loop control optimization for a stick-slip pendulum capsule drive.
//!
//! The crate approximates bounded optimal open-loop controls with truncated
//! Fourier series and optimizes them with Differential Evolution, either
//! independently per harmonic count (non-iterative) or by harmonic
//! continuation with warm starts (iterative). The pieces:
//!
//! * [`fourier`] — control signals parametrized by hyperspherical shape
//!   angles, fundamental frequency and span parameters, with an exact
//!   harmonic-extension rule for warm starting;
//! * [`capsule`] — the dimensionless pendulum-capsule plant with Coulomb
//!   stick/slip contact;
//! * [`integrator`] — adaptive Dormand-Prince 5(4) integration of
//!   piecewise-smooth systems with bisection event localization;
//! * [`optimizer`] — Differential Evolution over box bounds with elitist
//!   seeding;
//! * [`campaign`] — the distance cost functional and the multi-trial
//!   optimization campaigns with statistics;
//! * [`config`] / [`io`] / [`cli`] — config-driven command line front end
//!   emitting CSV and JSON artifacts.

pub mod campaign;
pub mod capsule;
pub mod cli;
pub mod config;
pub mod fourier;
pub mod integrator;
pub mod io;
pub mod optimizer;
