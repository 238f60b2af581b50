//! Flight-phase planning: capture-point landing angle and leg-angle
//! interpolation.
//!
//! The landing angle comes from the capture point of a linear inverted
//! pendulum: placing the foot `x_cp = ẋ·√(z/g)` ahead of the COM at
//! touchdown brings the pendulum to rest above the foot. During flight the
//! leg length is held constant and the leg angle is interpolated from its
//! takeoff value to the landing angle.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FlightError {
    #[error("landing height must be positive, got {0}")]
    NonPositiveHeight(f64),
    #[error("gravity must be positive, got {0}")]
    NonPositiveGravity(f64),
    #[error("leg length must be positive, got {0}")]
    NonPositiveLegLength(f64),
    /// |x_cp| > r: the capture point cannot be reached with the given leg.
    /// Carries the saturated from-vertical angle (±π/2) so callers may
    /// clamp instead of aborting.
    #[error("capture point {x_cp} outside leg reach {r}; saturated angle {saturated}")]
    CapturePointUnreachable { x_cp: f64, r: f64, saturated: f64 },
}

/// Landing plan for the flight phase.
#[derive(Debug, Clone, PartialEq)]
pub struct LandingPlan {
    /// Desired horizontal COM offset ahead of the foot at touchdown (m).
    pub x_cp: f64,
    /// Landing leg angle, from-vertical convention (rad).
    pub beta_landing: f64,
    /// Leg-angle schedule over the flight knots, takeoff to landing.
    pub beta_schedule: Vec<f64>,
}

/// Capture point `x_cp = ẋ·√(z/g)` for a COM at height `z_landing` moving
/// at `xdot_landing` at touchdown.
pub fn capture_point(xdot_landing: f64, z_landing: f64, g: f64) -> Result<f64, FlightError> {
    if !(z_landing > 0.0) {
        return Err(FlightError::NonPositiveHeight(z_landing));
    }
    if !(g > 0.0) {
        return Err(FlightError::NonPositiveGravity(g));
    }
    Ok(xdot_landing * (z_landing / g).sqrt())
}

/// Landing leg angle for a capture point `x_cp` and leg length `r`.
///
/// The capture-point relation `β = acos(x_cp/r)` measures the leg angle
/// from the ground plane; the rest of the crate measures leg angles from
/// the vertical, so the returned value is `π/2 − acos(x_cp/r) =
/// asin(x_cp/r)`. `x_cp = 0` therefore lands with a vertical leg.
pub fn landing_angle(x_cp: f64, r: f64) -> Result<f64, FlightError> {
    if !(r > 0.0) {
        return Err(FlightError::NonPositiveLegLength(r));
    }
    let ratio = x_cp / r;
    if ratio.abs() > 1.0 {
        return Err(FlightError::CapturePointUnreachable {
            x_cp,
            r,
            saturated: std::f64::consts::FRAC_PI_2.copysign(ratio),
        });
    }
    Ok(ratio.asin())
}

/// Leg-angle schedule from `beta_takeoff` to `beta_landing` over `n` knots.
///
/// Cubic smoothstep in the interpolation parameter: endpoints are
/// reproduced exactly and the endpoint rates are zero, so the leg does not
/// demand a torque spike right at takeoff or touchdown. The schedule is
/// monotone between the endpoints.
pub fn interpolate_leg_angle(beta_takeoff: f64, beta_landing: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "need at least two knots, got {n}");
    (0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            beta_takeoff + (beta_landing - beta_takeoff) * smoothstep(s)
        })
        .collect()
}

/// `3s² − 2s³` on [0, 1].
pub fn smoothstep(s: f64) -> f64 {
    s * s * (3.0 - 2.0 * s)
}

/// First derivative of [`smoothstep`] with respect to `s`.
pub fn smoothstep_deriv(s: f64) -> f64 {
    6.0 * s * (1.0 - s)
}

/// Second derivative of [`smoothstep`] with respect to `s`.
pub fn smoothstep_deriv2(s: f64) -> f64 {
    6.0 - 12.0 * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn capture_point_at_rest_is_over_foot() {
        assert_eq!(capture_point(0.0, 0.9, 9.81).unwrap(), 0.0);
    }

    #[test]
    fn capture_point_unit_time_constant() {
        // z numerically equal to g: √(z/g)=1 so x_cp = ẋ.
        assert_relative_eq!(capture_point(0.7, 9.81, 9.81).unwrap(), 0.7);
    }

    #[test]
    fn capture_point_formula() {
        let x_cp = capture_point(0.5, 0.9, 9.81).unwrap();
        assert_abs_diff_eq!(x_cp, 0.5 * (0.9f64 / 9.81).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(x_cp, 0.1514, epsilon = 5e-5);
    }

    #[test]
    fn capture_point_rejects_bad_inputs() {
        assert!(capture_point(0.1, 0.0, 9.81).is_err());
        assert!(capture_point(0.1, -1.0, 9.81).is_err());
        assert!(capture_point(0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn landing_angle_vertical_and_horizontal_limits() {
        assert_eq!(landing_angle(0.0, 0.8).unwrap(), 0.0);
        assert_relative_eq!(
            landing_angle(0.8, 0.8).unwrap(),
            std::f64::consts::FRAC_PI_2
        );
    }

    #[test]
    fn landing_angle_formula() {
        // paper-convention acos(0.4/0.8)=π/3 → from-vertical π/6.
        assert_relative_eq!(
            landing_angle(0.4, 0.8).unwrap(),
            std::f64::consts::FRAC_PI_6,
            max_relative = 1e-12
        );
    }

    #[test]
    fn landing_angle_unreachable_carries_saturation() {
        match landing_angle(1.0, 0.8) {
            Err(FlightError::CapturePointUnreachable { saturated, .. }) => {
                assert_relative_eq!(saturated, std::f64::consts::FRAC_PI_2);
            }
            other => panic!("expected unreachable error, got {other:?}"),
        }
        match landing_angle(-1.0, 0.8) {
            Err(FlightError::CapturePointUnreachable { saturated, .. }) => {
                assert_relative_eq!(saturated, -std::f64::consts::FRAC_PI_2);
            }
            other => panic!("expected unreachable error, got {other:?}"),
        }
    }

    #[test]
    fn interpolation_constant_when_endpoints_match() {
        let sched = interpolate_leg_angle(0.3, 0.3, 7);
        assert!(sched.iter().all(|&b| (b - 0.3).abs() < 1e-15));
    }

    #[test]
    fn interpolation_midpoint_of_three_knots() {
        let sched = interpolate_leg_angle(0.0, 0.4, 3);
        assert_eq!(sched.len(), 3);
        assert_abs_diff_eq!(sched[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn smoothstep_endpoint_rates_are_zero() {
        assert_eq!(smoothstep_deriv(0.0), 0.0);
        assert_eq!(smoothstep_deriv(1.0), 0.0);
    }

    #[test]
    fn lip_capture_point_brings_pendulum_to_rest() {
        // Linear inverted pendulum at height z with ẍ = (g/z)(x − x_f),
        // foot placed at the capture point: |ẋ| ≤ 1e-3 within 5 s.
        // RK4: the pendulum's unstable mode amplifies low-order
        // integration error by e^(ω·5) ≈ 1.5e7, Euler cannot hold it.
        let (z, g) = (0.9, 9.81);
        let xdot0 = 0.6;
        let x_f = capture_point(xdot0, z, g).unwrap();
        let (mut x, mut xdot) = (0.0, xdot0);
        let dt = 1e-4;
        let accel = |x: f64| g / z * (x - x_f);
        let mut t = 0.0;
        while t < 5.0 {
            let (k1x, k1v) = (xdot, accel(x));
            let (k2x, k2v) = (xdot + 0.5 * dt * k1v, accel(x + 0.5 * dt * k1x));
            let (k3x, k3v) = (xdot + 0.5 * dt * k2v, accel(x + 0.5 * dt * k2x));
            let (k4x, k4v) = (xdot + dt * k3v, accel(x + dt * k3x));
            x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            xdot += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            t += dt;
        }
        assert!(xdot.abs() <= 1e-3, "residual velocity {xdot}");
        assert!((x - x_f).abs() <= 1e-3, "COM not above foot: {}", x - x_f);
    }

    proptest! {
        #[test]
        fn capture_point_linear_in_velocity(xdot in -3.0f64..3.0, z in 0.2f64..1.5) {
            let g = 9.81;
            let one = capture_point(1.0, z, g).unwrap();
            let scaled = capture_point(xdot, z, g).unwrap();
            prop_assert!((scaled - xdot * one).abs() < 1e-12);
        }

        #[test]
        fn capture_point_scales_as_sqrt_height(z in 0.2f64..1.5, c in 0.5f64..4.0) {
            let g = 9.81;
            let base = capture_point(1.0, z, g).unwrap();
            let scaled = capture_point(1.0, c * z, g).unwrap();
            prop_assert!((scaled - base * c.sqrt()).abs() < 1e-12);
        }

        #[test]
        fn zero_velocity_always_lands_vertical(z in 0.2f64..1.5, r in 0.3f64..1.2) {
            let x_cp = capture_point(0.0, z, 9.81).unwrap();
            prop_assert_eq!(landing_angle(x_cp, r).unwrap(), 0.0);
        }

        #[test]
        fn schedule_hits_endpoints_and_is_monotone(
            b0 in -1.0f64..1.0,
            b1 in -1.0f64..1.0,
            n in 2usize..40,
        ) {
            let sched = interpolate_leg_angle(b0, b1, n);
            prop_assert_eq!(sched.len(), n);
            prop_assert!((sched[0] - b0).abs() < 1e-15);
            prop_assert!((sched[n - 1] - b1).abs() < 1e-15);
            let dir = (b1 - b0).signum();
            for w in sched.windows(2) {
                prop_assert!(dir * (w[1] - w[0]) >= -1e-15);
            }
        }
    }
}
