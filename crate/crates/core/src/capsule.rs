//! Dimensionless pendulum-capsule plant with Coulomb stick/slip contact.
//!
//! State is `(theta, theta', z, z')`: pendulum angle and rate, capsule
//! position and velocity, all dimensionless. The coupled dynamics in matrix
//! form are
//!
//! ```text
//! [ 1          -cos(theta) ] [theta'']   [ sin(theta) - rho theta - nu theta' + u ]
//! [ -cos(theta)  gamma + 1 ] [ z''   ] = [ -theta'^2 sin(theta) - f_z             ]
//! ```
//!
//! with the contact load `r_y = (gamma + 1) - theta'' sin(theta)
//! - theta'^2 cos(theta)`, the tangential demand `r_z = theta'' cos(theta)
//! - theta'^2 sin(theta)` and the Coulomb friction force
//!
//! ```text
//! f_z = mu r_y sgn(z')      if z' != 0
//! f_z = mu r_y sgn(r_z)     if z' == 0 and |r_z| >= mu r_y
//! f_z = r_z                 if z' == 0 and |r_z| <  mu r_y
//! ```
//!
//! Sticking pins `z'' = 0`; a slip arc substitutes `f_z = mu r_y s` for the
//! slip sign `s` and solves the resulting 2x2 linear system. That solve is
//! regular whenever `gamma + sin^2(theta) > mu |sin(theta) cos(theta)|`,
//! which holds comfortably in the studied parameter range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::HybridSystem;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("parameter {name} = {value} is outside its valid range")]
    BadParameter { name: &'static str, value: f64 },
    #[error("slip dynamics singular: determinant {det:e} at theta = {theta}")]
    SingularDynamics { det: f64, theta: f64 },
    #[error("mode {mode:?} requires z' {expected}, got {z_dot}")]
    InconsistentMode { mode: ContactMode, expected: &'static str, z_dot: f64 },
}

/// Friction coefficient, spring stiffness, damping and mass ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapsuleParams {
    pub mu: f64,
    pub rho: f64,
    pub nu: f64,
    pub gamma: f64,
}

impl Default for CapsuleParams {
    fn default() -> Self {
        Self { mu: 0.3, rho: 2.5, nu: 1.0, gamma: 10.0 }
    }
}

impl CapsuleParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let check = |name: &'static str, value: f64, ok: bool| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(PlantError::BadParameter { name, value })
            }
        };
        check("mu", self.mu, self.mu >= 0.0)?;
        check("rho", self.rho, self.rho >= 0.0)?;
        check("nu", self.nu, self.nu >= 0.0)?;
        check("gamma", self.gamma, self.gamma > 0.0)?;
        Ok(())
    }
}

/// Discrete contact mode of the capsule-ground interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    Stick,
    SlipPositive,
    SlipNegative,
}

impl ContactMode {
    /// Slip direction as a signed scalar; zero for stick.
    pub fn slip_sign(self) -> f64 {
        match self {
            ContactMode::Stick => 0.0,
            ContactMode::SlipPositive => 1.0,
            ContactMode::SlipNegative => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ContactMode::Stick => "stick",
            ContactMode::SlipPositive => "slip+",
            ContactMode::SlipNegative => "slip-",
        }
    }
}

impl std::fmt::Display for ContactMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Full plant state: continuous coordinates plus contact mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapsuleState {
    pub theta: f64,
    pub theta_dot: f64,
    pub z: f64,
    pub z_dot: f64,
    pub mode: ContactMode,
}

impl CapsuleState {
    /// Rest state: everything zero, sticking.
    pub fn rest() -> Self {
        Self { theta: 0.0, theta_dot: 0.0, z: 0.0, z_dot: 0.0, mode: ContactMode::Stick }
    }

    pub fn new(
        theta: f64,
        theta_dot: f64,
        z: f64,
        z_dot: f64,
        mode: ContactMode,
    ) -> Result<Self, PlantError> {
        match mode {
            ContactMode::Stick if z_dot != 0.0 => {
                Err(PlantError::InconsistentMode { mode, expected: "= 0", z_dot })
            }
            ContactMode::SlipPositive if z_dot < 0.0 => {
                Err(PlantError::InconsistentMode { mode, expected: ">= 0", z_dot })
            }
            ContactMode::SlipNegative if z_dot > 0.0 => {
                Err(PlantError::InconsistentMode { mode, expected: "<= 0", z_dot })
            }
            _ => Ok(Self { theta, theta_dot, z, z_dot, mode }),
        }
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.theta, self.theta_dot, self.z, self.z_dot]
    }

    pub fn from_coords(y: &[f64; 4], mode: ContactMode) -> Self {
        Self { theta: y[0], theta_dot: y[1], z: y[2], z_dot: y[3], mode }
    }
}

/// Contact quantities along a trajectory: normal load, tangential demand and
/// the friction force actually applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactForces {
    pub r_y: f64,
    pub r_z: f64,
    pub f_z: f64,
}

/// Friction dispatch outcome: the force and the contact mode it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionOutcome {
    pub force: f64,
    pub mode: ContactMode,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Accelerations while the capsule sticks: `z'' = 0` and the pendulum row
/// decouples because the `cos(theta) z''` coupling vanishes.
pub fn stick_derivative(y: &[f64; 4], u: f64, params: &CapsuleParams) -> (f64, f64) {
    let theta = y[0];
    let theta_dot = y[1];
    let theta_ddot = theta.sin() - params.rho * theta - params.nu * theta_dot + u;
    (theta_ddot, 0.0)
}

/// Accelerations on a slip arc with slip sign `s`, obtained by substituting
/// `f_z = mu s r_y(theta'')` into the matrix dynamics and solving the
/// resulting 2x2 linear system.
pub fn slip_derivative(
    y: &[f64; 4],
    u: f64,
    params: &CapsuleParams,
    s: f64,
) -> Result<(f64, f64), PlantError> {
    let theta = y[0];
    let theta_dot = y[1];
    let (st, ct) = theta.sin_cos();
    let mus = params.mu * s;
    let gp1 = params.gamma + 1.0;
    let td2 = theta_dot * theta_dot;

    let a12 = -ct;
    let a21 = -ct - mus * st;
    let b1 = st - params.rho * theta - params.nu * theta_dot + u;
    let b2 = -td2 * st - mus * gp1 + mus * td2 * ct;

    let det = gp1 - a12 * a21;
    if det.abs() < 1e-12 {
        return Err(PlantError::SingularDynamics { det, theta });
    }
    let theta_ddot = (b1 * gp1 - a12 * b2) / det;
    let z_ddot = (b2 - a21 * b1) / det;
    Ok((theta_ddot, z_ddot))
}

/// Normal contact load (the Lagrange multiplier of the vertical constraint).
/// Negative values mean liftoff and are reported, not clamped.
pub fn contact_load(y: &[f64; 4], theta_ddot: f64, params: &CapsuleParams) -> f64 {
    let (st, ct) = y[0].sin_cos();
    (params.gamma + 1.0) - theta_ddot * st - y[1] * y[1] * ct
}

/// Horizontal force the pendulum exerts on the capsule.
pub fn tangential_demand(y: &[f64; 4], theta_ddot: f64) -> f64 {
    let (st, ct) = y[0].sin_cos();
    theta_ddot * ct - y[1] * y[1] * st
}

/// Three-branch Coulomb dispatch. With the capsule moving, kinetic friction
/// opposes the motion; at rest the tangential demand either stays under the
/// static threshold (stick) or slip begins in the demand's direction.
pub fn friction_force(z_dot: f64, r_y: f64, r_z: f64, params: &CapsuleParams) -> FrictionOutcome {
    if z_dot != 0.0 {
        let mode = if z_dot > 0.0 { ContactMode::SlipPositive } else { ContactMode::SlipNegative };
        FrictionOutcome { force: params.mu * r_y * sign(z_dot), mode }
    } else if r_z.abs() >= params.mu * r_y {
        let mode =
            if sign(r_z) < 0.0 { ContactMode::SlipNegative } else { ContactMode::SlipPositive };
        FrictionOutcome { force: params.mu * r_y * sign(r_z), mode }
    } else {
        FrictionOutcome { force: r_z, mode: ContactMode::Stick }
    }
}

/// Contact forces for a state whose `theta''` has already been resolved.
pub fn contact_forces(
    y: &[f64; 4],
    theta_ddot: f64,
    params: &CapsuleParams,
) -> (ContactForces, ContactMode) {
    let r_y = contact_load(y, theta_ddot, params);
    let r_z = tangential_demand(y, theta_ddot);
    let out = friction_force(y[3], r_y, r_z, params);
    (ContactForces { r_y, r_z, f_z: out.force }, out.mode)
}

/// Stick persistence margin `mu r_y - |r_z|`, evaluated with the stick-mode
/// acceleration. Positive while sticking holds; a crossing to zero starts a
/// slip arc in the direction of `r_z`.
pub fn stick_break_event(y: &[f64; 4], u: f64, params: &CapsuleParams) -> f64 {
    let (theta_ddot, _) = stick_derivative(y, u, params);
    let r_y = contact_load(y, theta_ddot, params);
    let r_z = tangential_demand(y, theta_ddot);
    params.mu * r_y - r_z.abs()
}

/// Slip arcs end where the capsule velocity crosses zero.
pub fn slip_stop_event(y: &[f64; 4]) -> f64 {
    y[3]
}

/// The plant as a hybrid system over `[theta, theta', z, z']`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapsuleSystem {
    pub params: CapsuleParams,
}

impl CapsuleSystem {
    pub fn new(params: CapsuleParams) -> Self {
        Self { params }
    }

    /// Contact mode consistent with a state and the control value there:
    /// a moving capsule slips in its direction of motion; at rest the
    /// friction dispatch decides between stick and slip onset.
    pub fn classify(&self, y: &[f64; 4], u: f64) -> ContactMode {
        if y[3] != 0.0 {
            return if y[3] > 0.0 { ContactMode::SlipPositive } else { ContactMode::SlipNegative };
        }
        let (theta_ddot, _) = stick_derivative(y, u, &self.params);
        let r_y = contact_load(y, theta_ddot, &self.params);
        let r_z = tangential_demand(y, theta_ddot);
        friction_force(0.0, r_y, r_z, &self.params).mode
    }

    fn theta_ddot(&self, mode: ContactMode, y: &[f64; 4], u: f64) -> f64 {
        match mode {
            ContactMode::Stick => stick_derivative(y, u, &self.params).0,
            slip => {
                slip_derivative(y, u, &self.params, slip.slip_sign())
                    .expect("slip dynamics singular")
                    .0
            }
        }
    }
}

impl HybridSystem<4> for CapsuleSystem {
    type Mode = ContactMode;

    fn derivative(&self, mode: ContactMode, _t: f64, y: &[f64; 4], u: f64) -> [f64; 4] {
        match mode {
            ContactMode::Stick => {
                let (theta_ddot, _) = stick_derivative(y, u, &self.params);
                [y[1], theta_ddot, 0.0, 0.0]
            }
            slip => {
                let (theta_ddot, z_ddot) = slip_derivative(y, u, &self.params, slip.slip_sign())
                    .expect("slip dynamics singular");
                [y[1], theta_ddot, y[3], z_ddot]
            }
        }
    }

    fn event_count(&self, _mode: ContactMode) -> usize {
        1
    }

    fn event_value(&self, mode: ContactMode, _event: usize, _t: f64, y: &[f64; 4], u: f64) -> f64 {
        // Margins are nonnegative while the mode is consistent: sticking
        // needs demand under the static threshold, a slip arc needs the
        // capsule moving (weakly) in its slip direction.
        match mode {
            ContactMode::Stick => stick_break_event(y, u, &self.params),
            slip => slip.slip_sign() * slip_stop_event(y),
        }
    }

    fn apply_transition(
        &self,
        _mode: ContactMode,
        _event: usize,
        _t: f64,
        y: &[f64; 4],
        u: f64,
    ) -> (ContactMode, [f64; 4]) {
        // Both event kinds fire with the capsule momentarily at rest; pin the
        // velocity so roundoff cannot re-trigger the crossing, then dispatch.
        let mut snapped = *y;
        snapped[3] = 0.0;
        let (theta_ddot, _) = stick_derivative(&snapped, u, &self.params);
        let r_y = contact_load(&snapped, theta_ddot, &self.params);
        let r_z = tangential_demand(&snapped, theta_ddot);
        let next = friction_force(0.0, r_y, r_z, &self.params).mode;
        (next, snapped)
    }

    fn flag_step(&self, mode: ContactMode, _t: f64, y: &[f64; 4], u: f64) -> bool {
        // Liftoff indicator: the contact formulation assumes r_y > 0.
        let theta_ddot = self.theta_ddot(mode, y, u);
        contact_load(y, theta_ddot, &self.params) <= 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const P: CapsuleParams = CapsuleParams { mu: 0.3, rho: 2.5, nu: 1.0, gamma: 10.0 };

    #[test]
    fn stick_acceleration_cases() {
        let rest = [0.0, 0.0, 0.0, 0.0];
        assert_eq!(stick_derivative(&rest, 0.0, &P), (0.0, 0.0));
        assert_eq!(stick_derivative(&rest, 4.0, &P), (4.0, 0.0));
        let y = [PI / 6.0, 1.0, 0.0, 0.0];
        let (tdd, zdd) = stick_derivative(&y, 0.0, &P);
        let expect = 0.5 - 2.5 * (PI / 6.0) - 1.0;
        assert!((tdd - expect).abs() < 1e-12);
        assert_eq!(zdd, 0.0);
    }

    #[test]
    fn slip_solve_matches_hand_solution() {
        // theta = 0, theta' = 0, u = 0, s = +1:
        // row 1: tdd - zdd = 0; row 2: -tdd + 11 zdd = -3.3.
        let rest = [0.0, 0.0, 0.0, 0.0];
        let (tdd, zdd) = slip_derivative(&rest, 0.0, &P, 1.0).unwrap();
        assert!((tdd + 0.33).abs() < 1e-12);
        assert!((zdd + 0.33).abs() < 1e-12);

        // Frictionless: row 1 gives tdd - zdd = 1, row 2 gives -tdd + 11 zdd = 0.
        let frictionless = CapsuleParams { mu: 0.0, ..P };
        let (tdd, zdd) = slip_derivative(&rest, 1.0, &frictionless, 1.0).unwrap();
        assert!((tdd - 1.1).abs() < 1e-12);
        assert!((zdd - 0.1).abs() < 1e-12);
    }

    #[test]
    fn contact_load_cases() {
        assert_eq!(contact_load(&[0.0, 0.0, 0.0, 0.0], 123.0, &P), 11.0);
        let y = [PI / 2.0, 0.0, 0.0, 0.0];
        assert!((contact_load(&y, 1.0, &P) - 10.0).abs() < 1e-12);
        let y = [0.0, 1.0, 0.0, 0.0];
        assert!((contact_load(&y, 0.0, &P) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn tangential_demand_cases() {
        assert_eq!(tangential_demand(&[0.0, 0.0, 0.0, 0.0], 2.0), 2.0);
        let y = [PI / 2.0, 1.0, 0.0, 0.0];
        assert!((tangential_demand(&y, 5.0) + 1.0).abs() < 1e-12);
        assert_eq!(tangential_demand(&[0.3, 0.0, 0.0, 0.0], 0.0), 0.0);
    }

    #[test]
    fn friction_dispatch_branches() {
        let moving = friction_force(0.5, 11.0, 0.0, &P);
        assert!((moving.force - 3.3).abs() < 1e-12);
        assert_eq!(moving.mode, ContactMode::SlipPositive);

        let holding = friction_force(0.0, 11.0, 1.0, &P);
        assert_eq!(holding.force, 1.0);
        assert_eq!(holding.mode, ContactMode::Stick);

        let breaking = friction_force(0.0, 11.0, 5.0, &P);
        assert!((breaking.force - 3.3).abs() < 1e-12);
        assert_eq!(breaking.mode, ContactMode::SlipPositive);

        let backwards = friction_force(0.0, 11.0, -5.0, &P);
        assert!((backwards.force + 3.3).abs() < 1e-12);
        assert_eq!(backwards.mode, ContactMode::SlipNegative);
    }

    #[test]
    fn slip_friction_sign_consistency() {
        // In any slip mode f_z = mu r_y sign(z') exactly.
        let y = [0.2, 0.4, 0.0, 0.7];
        let (tdd, _) = slip_derivative(&y, 1.0, &P, 1.0).unwrap();
        let (forces, mode) = contact_forces(&y, tdd, &P);
        assert_eq!(mode, ContactMode::SlipPositive);
        assert!((forces.f_z - P.mu * forces.r_y).abs() < 1e-12);
    }

    #[test]
    fn stick_break_margin_at_rest() {
        let rest = [0.0, 0.0, 0.0, 0.0];
        assert!((stick_break_event(&rest, 0.0, &P) - 3.3).abs() < 1e-12);
        // Driving hard enough to break: |r_z| = |u| > mu r_y.
        assert!(stick_break_event(&rest, 4.0, &P) < 0.0);
    }

    #[test]
    fn classify_from_rest() {
        let sys = CapsuleSystem::new(P);
        let rest = [0.0, 0.0, 0.0, 0.0];
        assert_eq!(sys.classify(&rest, 0.0), ContactMode::Stick);
        assert_eq!(sys.classify(&rest, 4.0), ContactMode::SlipPositive);
        assert_eq!(sys.classify(&rest, -4.0), ContactMode::SlipNegative);
        assert_eq!(sys.classify(&[0.0, 0.0, 0.0, 0.2], 0.0), ContactMode::SlipPositive);
    }

    #[test]
    fn state_mode_consistency_enforced() {
        assert!(CapsuleState::new(0.0, 0.0, 0.0, 0.1, ContactMode::Stick).is_err());
        assert!(CapsuleState::new(0.0, 0.0, 0.0, -0.1, ContactMode::SlipPositive).is_err());
        assert!(CapsuleState::new(0.0, 0.0, 0.0, -0.1, ContactMode::SlipNegative).is_ok());
        assert_eq!(CapsuleState::rest().coords(), [0.0; 4]);
    }

    #[test]
    fn params_validation() {
        assert!(CapsuleParams::default().validate().is_ok());
        assert!(CapsuleParams { gamma: 0.0, ..P }.validate().is_err());
        assert!(CapsuleParams { mu: -0.1, ..P }.validate().is_err());
    }

    /// Independent route to the slip accelerations: fixed-point iteration on
    /// the friction force through the unsubstituted matrix dynamics.
    fn slip_fixed_point(y: &[f64; 4], u: f64, p: &CapsuleParams, s: f64) -> (f64, f64, f64) {
        let (st, ct) = y[0].sin_cos();
        let gp1 = p.gamma + 1.0;
        let det = gp1 - ct * ct;
        let mut f_z = 0.0;
        let mut acc = (0.0, 0.0);
        for _ in 0..200 {
            let b1 = st - p.rho * y[0] - p.nu * y[1] + u;
            let b2 = -y[1] * y[1] * st - f_z;
            let tdd = (gp1 * b1 + ct * b2) / det;
            let zdd = (ct * b1 + b2) / det;
            acc = (tdd, zdd);
            let r_y = gp1 - tdd * st - y[1] * y[1] * ct;
            let next = p.mu * r_y * s;
            if (next - f_z).abs() < 1e-15 {
                f_z = next;
                break;
            }
            f_z = next;
        }
        (acc.0, acc.1, f_z)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn prop_slip_solve_self_consistent(
            theta in -PI..PI,
            theta_dot in -3.0f64..3.0,
            speed in 0.01f64..3.0,
            u in -4.0f64..4.0,
            s_pos in proptest::bool::ANY,
        ) {
            let s = if s_pos { 1.0 } else { -1.0 };
            let y = [theta, theta_dot, 0.0, speed * s];
            let (tdd, zdd) = slip_derivative(&y, u, &P, s).unwrap();
            let (tdd2, zdd2, f_z2) = slip_fixed_point(&y, u, &P, s);
            prop_assert!((tdd - tdd2).abs() < 1e-10, "{tdd} vs {tdd2}");
            prop_assert!((zdd - zdd2).abs() < 1e-10, "{zdd} vs {zdd2}");
            // And the friction force implied by the closed-form solve agrees.
            let r_y = contact_load(&y, tdd, &P);
            prop_assert!((P.mu * r_y * s - f_z2).abs() < 1e-10);
        }

        #[test]
        fn prop_mass_matrix_never_singular(theta in -10.0f64..10.0) {
            let det = P.gamma + 1.0 - theta.cos() * theta.cos();
            prop_assert!(det >= P.gamma);
        }
    }
}
