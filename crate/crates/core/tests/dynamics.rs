//! Trajectory-level invariants of the capsule plant under the adaptive
//! integrator: rest invariance, event hygiene, mirror symmetry and
//! determinism.

use capsule_opt::capsule::{
    contact_load, stick_derivative, tangential_demand, CapsuleParams, CapsuleSystem, ContactMode,
};
use capsule_opt::fourier::{build_control, ControlBounds, ControlShape, FourierControl, SpanParams};
use capsule_opt::integrator::{integrate, IntegratorConfig};

fn sample_control() -> FourierControl {
    let shape = ControlShape::new(vec![1.1, 2.4, 0.9], 1.15).unwrap();
    let span = SpanParams::new(0.95, 0.9).unwrap();
    build_control(&shape, span, ControlBounds::default(), 0.0, 100.0).unwrap()
}

#[test]
fn zero_control_stays_exactly_at_rest() {
    let system = CapsuleSystem::new(CapsuleParams::default());
    let config = IntegratorConfig::default();
    let traj = integrate(&system, [0.0; 4], ContactMode::Stick, 0.0, 100.0, &config, &|_| 0.0)
        .unwrap();
    assert_eq!(traj.final_state(), [0.0; 4]);
    assert!(traj.events.is_empty());
    assert!(traj.states.iter().all(|y| *y == [0.0; 4]));
}

#[test]
fn constant_max_control_moves_the_capsule() {
    let system = CapsuleSystem::new(CapsuleParams::default());
    let config = IntegratorConfig::default();
    let mode0 = system.classify(&[0.0; 4], 4.0);
    assert_eq!(mode0, ContactMode::SlipPositive);
    let traj =
        integrate(&system, [0.0; 4], mode0, 0.0, 100.0, &config, &|_| 4.0).unwrap();
    let yf = traj.final_state();
    assert!(yf[2].is_finite());
    assert!(yf[2].abs() > 0.0, "constant drive must move the capsule");
    assert!(!traj.events.is_empty());
}

#[test]
fn event_residuals_are_tight() {
    let control = sample_control();
    let params = CapsuleParams::default();
    let system = CapsuleSystem::new(params);
    let config = IntegratorConfig::default();
    let u = |t: f64| control.evaluate(t);
    let mode0 = system.classify(&[0.0; 4], u(0.0));
    let traj = integrate(&system, [0.0; 4], mode0, 0.0, 100.0, &config, &u).unwrap();
    assert!(traj.events.len() > 4, "expected an eventful run, got {}", traj.events.len());

    for ev in &traj.events {
        match ev.from {
            ContactMode::Stick => {
                let (tdd, _) = stick_derivative(&ev.state, u(ev.time), &params);
                let r_y = contact_load(&ev.state, tdd, &params);
                let r_z = tangential_demand(&ev.state, tdd);
                let residual = (params.mu * r_y - r_z.abs()).abs();
                assert!(
                    residual <= 1e-9 * (1.0 + params.mu * r_y),
                    "stick-break residual {residual} at tau = {}",
                    ev.time
                );
            }
            _ => {
                assert!(
                    ev.state[3].abs() <= 1e-9,
                    "slip-stop residual {} at tau = {}",
                    ev.state[3],
                    ev.time
                );
            }
        }
    }
}

#[test]
fn no_mode_chattering() {
    let control = sample_control();
    let system = CapsuleSystem::new(CapsuleParams::default());
    let config = IntegratorConfig::default();
    let u = |t: f64| control.evaluate(t);
    let mode0 = system.classify(&[0.0; 4], u(0.0));
    let traj = integrate(&system, [0.0; 4], mode0, 0.0, 100.0, &config, &u).unwrap();
    for pair in traj.events.windows(2) {
        let gap = pair[1].time - pair[0].time;
        let reversal = pair[0].from != ContactMode::Stick && pair[0].to != ContactMode::Stick;
        assert!(
            gap > config.event_tol_time || reversal,
            "events {:?}->{:?} and {:?}->{:?} only {gap} apart",
            pair[0].from,
            pair[0].to,
            pair[1].from,
            pair[1].to
        );
    }
}

#[test]
fn mirrored_control_gives_mirrored_trajectory() {
    let control = sample_control();
    let negated = control.negated();
    let system = CapsuleSystem::new(CapsuleParams::default());
    let config = IntegratorConfig::default();

    let run = |ctrl: &FourierControl| {
        let u = |t: f64| ctrl.evaluate(t);
        let mode0 = system.classify(&[0.0; 4], u(0.0));
        integrate(&system, [0.0; 4], mode0, 0.0, 100.0, &config, &u).unwrap()
    };
    let base = run(&control);
    let mirror = run(&negated);

    let yf = base.final_state();
    let yg = mirror.final_state();
    for i in 0..4 {
        assert!(
            (yf[i] + yg[i]).abs() < 1e-6,
            "component {i}: {} vs {}",
            yf[i],
            yg[i]
        );
    }
    assert_eq!(base.events.len(), mirror.events.len());
}

#[test]
fn repeated_runs_are_bit_identical() {
    let control = sample_control();
    let system = CapsuleSystem::new(CapsuleParams::default());
    let config = IntegratorConfig::default();
    let u = |t: f64| control.evaluate(t);
    let mode0 = system.classify(&[0.0; 4], u(0.0));
    let a = integrate(&system, [0.0; 4], mode0, 0.0, 100.0, &config, &u).unwrap();
    let b = integrate(&system, [0.0; 4], mode0, 0.0, 100.0, &config, &u).unwrap();
    assert_eq!(a.times, b.times);
    assert_eq!(a.states, b.states);
    assert_eq!(a.modes, b.modes);
    assert_eq!(a.events.len(), b.events.len());
    for (x, y) in a.events.iter().zip(&b.events) {
        assert_eq!(x.time, y.time);
        assert_eq!(x.state, y.state);
        assert_eq!(x.from, y.from);
        assert_eq!(x.to, y.to);
    }
}

#[test]
fn slip_arcs_respect_their_direction() {
    // Between events, a slip arc's velocity never strays to the wrong sign
    // beyond integration tolerance.
    let control = sample_control();
    let system = CapsuleSystem::new(CapsuleParams::default());
    let config = IntegratorConfig::default();
    let u = |t: f64| control.evaluate(t);
    let mode0 = system.classify(&[0.0; 4], u(0.0));
    let traj = integrate(&system, [0.0; 4], mode0, 0.0, 100.0, &config, &u).unwrap();
    for (y, mode) in traj.states.iter().zip(&traj.modes) {
        match mode {
            ContactMode::Stick => assert_eq!(y[3], 0.0),
            ContactMode::SlipPositive => assert!(y[3] >= -1e-9, "slip+ with z' = {}", y[3]),
            ContactMode::SlipNegative => assert!(y[3] <= 1e-9, "slip- with z' = {}", y[3]),
        }
    }
}
