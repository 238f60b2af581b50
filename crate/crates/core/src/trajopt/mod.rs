//! Direct-transcription trajectory optimization over the template model.
//!
//! The jumping and landing phases are discretized on a uniform time grid;
//! states and controls at every knot become decision variables, the
//! dynamics are enforced as trapezoidal defect constraints, and the
//! resulting nonlinear program is solved with SQP ([`sqp`]).
//!
//! Decision variables per knot: the ten template states
//! `(x, z, ẋ, ż, θ, θ̇, r, ṙ, β, β̇)` plus controls `(r̈, τ, β̈)`. COM
//! coordinates are retained alongside the leg polar coordinates with the
//! stance kinematic map enforced as equality constraints, so the takeoff
//! velocity goals and the ground-reaction decomposition both stay directly
//! expressible.

mod transcription;

pub mod sqp;

pub use transcription::{
    check_trajectory, ConstraintCheck, PhaseKind, TranscribedProblem, VIOLATION_FAMILIES,
};

use crate::fslip::{self, FslipControl, FslipParams, FslipState};
use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrajError {
    #[error("states ({states}) and derivatives ({derivs}) must have equal length ≥ 2")]
    LengthMismatch { states: usize, derivs: usize },
    #[error("invalid grid: N = {n}, dt = {dt} (need N ≥ 3, dt > 0)")]
    BadGrid { n: usize, dt: f64 },
    #[error("invalid goal: {0}")]
    BadGoal(String),
    #[error("invalid limits: {0}")]
    BadLimits(String),
    #[error("start state violates stance consistency by {0:.3e}")]
    InconsistentStart(f64),
    #[error("touchdown state must descend (ż = {0})")]
    AscendingTouchdown(f64),
}

/// Uniform transcription grid: `n` knots spaced `dt` apart.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TranscriptionGrid {
    pub n: usize,
    pub dt: f64,
}

impl TranscriptionGrid {
    pub fn new(n: usize, dt: f64) -> Result<Self, TrajError> {
        if n < 3 || !(dt > 0.0) {
            return Err(TrajError::BadGrid { n, dt });
        }
        Ok(Self { n, dt })
    }

    /// Grid covering `duration` seconds with `n` knots.
    pub fn with_duration(n: usize, duration: f64) -> Result<Self, TrajError> {
        if n < 3 || !(duration > 0.0) {
            return Err(TrajError::BadGrid { n, dt: duration });
        }
        Self::new(n, duration / (n - 1) as f64)
    }

    pub fn duration(&self) -> f64 {
        (self.n - 1) as f64 * self.dt
    }
}

/// Desired takeoff COM velocities.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JumpGoal {
    pub xdot_d: f64,
    pub zdot_d: f64,
}

impl JumpGoal {
    pub fn new(xdot_d: f64, zdot_d: f64) -> Result<Self, TrajError> {
        // zdot_d = 0 is allowed only as the degenerate "stay put" goal.
        if zdot_d < 0.0 || !zdot_d.is_finite() || !xdot_d.is_finite() {
            return Err(TrajError::BadGoal(format!(
                "takeoff velocities ({xdot_d}, {zdot_d})"
            )));
        }
        Ok(Self { xdot_d, zdot_d })
    }
}

/// Flywheel rate and acceleration box (the swing-arm limits).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArmLimits {
    pub thetadot_l: f64,
    pub thetadot_u: f64,
    pub thetaddot_l: f64,
    pub thetaddot_u: f64,
}

impl ArmLimits {
    pub fn new(
        thetadot_l: f64,
        thetadot_u: f64,
        thetaddot_l: f64,
        thetaddot_u: f64,
    ) -> Result<Self, TrajError> {
        if thetadot_l >= thetadot_u || thetaddot_l >= thetaddot_u {
            return Err(TrajError::BadLimits(format!(
                "lower bound not below upper: rate [{thetadot_l}, {thetadot_u}], \
                 accel [{thetaddot_l}, {thetaddot_u}]"
            )));
        }
        Ok(Self {
            thetadot_l,
            thetadot_u,
            thetaddot_l,
            thetaddot_u,
        })
    }
}

/// Desired final COM height of the landing phase.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LandingGoal {
    pub z_d: f64,
}

impl LandingGoal {
    pub fn new(z_d: f64, params: &FslipParams) -> Result<Self, TrajError> {
        if !(z_d > 0.0) || z_d > params.r0 {
            return Err(TrajError::BadGoal(format!(
                "final height {z_d} outside (0, {}]",
                params.r0
            )));
        }
        Ok(Self { z_d })
    }
}

/// One knot of a planned trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajKnot {
    pub t: f64,
    pub state: FslipState,
    pub control: FslipControl,
    /// Template-implied ground reaction force (zero in flight).
    pub fx: f64,
    pub fz: f64,
}

/// Time-discretized reference for one motion phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrajectory {
    pub grid: TranscriptionGrid,
    pub knots: Vec<TrajKnot>,
}

/// A sampled reference point: state plus COM acceleration.
#[derive(Debug, Clone, Copy)]
pub struct TrajSample {
    pub state: FslipState,
    pub control: FslipControl,
    pub com_accel: [f64; 2],
}

impl PhaseTrajectory {
    pub fn duration(&self) -> f64 {
        self.grid.duration()
    }

    /// Linear interpolation between knots with clamp-at-end semantics.
    /// COM accelerations interpolate between the knot accelerations of the
    /// stance dynamics.
    pub fn sample(&self, t: f64, params: &FslipParams) -> TrajSample {
        let n = self.knots.len();
        let dt = self.grid.dt;
        let s = (t / dt).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        let w = s - i as f64;
        let (a, b) = (&self.knots[i], &self.knots[i + 1]);
        let lerp = |u: f64, v: f64| u + w * (v - u);
        let state = FslipState {
            x: lerp(a.state.x, b.state.x),
            z: lerp(a.state.z, b.state.z),
            xdot: lerp(a.state.xdot, b.state.xdot),
            zdot: lerp(a.state.zdot, b.state.zdot),
            theta: lerp(a.state.theta, b.state.theta),
            thetadot: lerp(a.state.thetadot, b.state.thetadot),
            r: lerp(a.state.r, b.state.r),
            rdot: lerp(a.state.rdot, b.state.rdot),
            beta: lerp(a.state.beta, b.state.beta),
            betadot: lerp(a.state.betadot, b.state.betadot),
        };
        let control = FslipControl {
            tau: lerp(a.control.tau, b.control.tau),
            rddot: lerp(a.control.rddot, b.control.rddot),
        };
        let accel = |k: &TrajKnot| {
            fslip::stance_dynamics(&k.state, &k.control, params)
                .map(|acc| [acc.xddot, acc.zddot])
                .unwrap_or([0.0, -params.g])
        };
        let (aa, ab) = (accel(a), accel(b));
        TrajSample {
            state,
            control,
            com_accel: [lerp(aa[0], ab[0]), lerp(aa[1], ab[1])],
        }
    }

    /// The final knot state (used for phase hand-off).
    pub fn terminal(&self) -> &TrajKnot {
        self.knots.last().expect("trajectory has knots")
    }

    /// CSV serialization: header plus one row per knot. Column order:
    /// `t,x,z,xdot,zdot,theta,thetadot,r,rdot,beta,betadot,rddot,tau,fx,fz`.
    /// Values use 17-significant-digit scientific notation so that files
    /// round-trip f64 exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for k in &self.knots {
            let s = &k.state;
            let row = [
                k.t, s.x, s.z, s.xdot, s.zdot, s.theta, s.thetadot, s.r, s.rdot, s.beta,
                s.betadot, k.control.rddot, k.control.tau, k.fx, k.fz,
            ];
            let cells: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub const CSV_HEADER: &str =
    "t,x,z,xdot,zdot,theta,thetadot,r,rdot,beta,betadot,rddot,tau,fx,fz";

/// Fixed 17-significant-digit formatting shared by every CSV writer.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Trapezoidal defect vector: for each interval and state component,
/// `x_{i+1} − x_i − (dt/2)(f_i + f_{i+1})`. Zero at a dynamically feasible
/// discrete trajectory.
pub fn trapezoidal_defects(
    states: &[DVector<f64>],
    derivs: &[DVector<f64>],
    dt: f64,
) -> Result<DVector<f64>, TrajError> {
    if states.len() != derivs.len() || states.len() < 2 {
        return Err(TrajError::LengthMismatch {
            states: states.len(),
            derivs: derivs.len(),
        });
    }
    let dim = states[0].len();
    let mut out = DVector::zeros(dim * (states.len() - 1));
    for i in 0..states.len() - 1 {
        let defect = &states[i + 1] - &states[i] - (dt / 2.0) * (&derivs[i] + &derivs[i + 1]);
        out.rows_mut(i * dim, dim).copy_from(&defect);
    }
    Ok(out)
}

/// Virtual energy of a planned phase: `Σ_i (c1·r̈_i² + c2·τ_i²)·ΔT`.
pub fn virtual_energy_cost(traj: &PhaseTrajectory, c1: f64, c2: f64) -> f64 {
    assert!(c1 >= 0.0 && c2 >= 0.0, "cost weights must be non-negative");
    traj.knots
        .iter()
        .map(|k| c1 * k.control.rddot * k.control.rddot + c2 * k.control.tau * k.control.tau)
        .sum::<f64>()
        * traj.grid.dt
}

/// Friction-cone residuals `(Fx − μFz, −Fx − μFz)`; the contact does not
/// slip iff both are ≤ 0.
pub fn friction_constraint(fx: f64, fz: f64, mu: f64) -> (f64, f64) {
    debug_assert!(mu > 0.0);
    (fx - mu * fz, -fx - mu * fz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn defects_exact_for_constant_derivative() {
        let c = 1.7;
        let dt = 0.05;
        let states = vec![dv(&[0.0]), dv(&[c * dt]), dv(&[2.0 * c * dt])];
        let derivs = vec![dv(&[c]), dv(&[c]), dv(&[c])];
        let d = trapezoidal_defects(&states, &derivs, dt).unwrap();
        assert!(d.amax() < 1e-15);
    }

    #[test]
    fn defects_zero_for_constant_state() {
        let states = vec![dv(&[2.0, -1.0]); 4];
        let derivs = vec![dv(&[0.0, 0.0]); 4];
        let d = trapezoidal_defects(&states, &derivs, 0.1).unwrap();
        assert_eq!(d.amax(), 0.0);
    }

    #[test]
    fn defects_hand_arithmetic() {
        // x=(0,1), f=(0,2), dt=1 → 1 − 0 − 0.5·(0+2) = 0.
        let d = trapezoidal_defects(&[dv(&[0.0]), dv(&[1.0])], &[dv(&[0.0]), dv(&[2.0])], 1.0)
            .unwrap();
        assert_abs_diff_eq!(d[0], 0.0);
    }

    #[test]
    fn defects_reject_length_mismatch() {
        let err = trapezoidal_defects(&[dv(&[0.0])], &[dv(&[0.0]), dv(&[1.0])], 0.1).unwrap_err();
        assert!(matches!(err, TrajError::LengthMismatch { .. }));
    }

    fn single_knot_traj(rddot: f64, tau: f64, dt: f64) -> PhaseTrajectory {
        PhaseTrajectory {
            grid: TranscriptionGrid { n: 3, dt },
            knots: vec![TrajKnot {
                t: 0.0,
                state: FslipState::default(),
                control: FslipControl { tau, rddot },
                fx: 0.0,
                fz: 0.0,
            }],
        }
    }

    #[test]
    fn virtual_energy_zero_without_controls() {
        let traj = single_knot_traj(0.0, 0.0, 0.01);
        assert_eq!(virtual_energy_cost(&traj, 1.0, 1.0), 0.0);
    }

    #[test]
    fn virtual_energy_single_knot() {
        let traj = single_knot_traj(2.0, 3.0, 0.01);
        assert_abs_diff_eq!(virtual_energy_cost(&traj, 1.0, 1.0), 0.13, epsilon = 1e-15);
    }

    #[test]
    fn virtual_energy_linear_in_dt() {
        let a = virtual_energy_cost(&single_knot_traj(2.0, 3.0, 0.01), 1.0, 1.0);
        let b = virtual_energy_cost(&single_knot_traj(2.0, 3.0, 0.02), 1.0, 1.0);
        assert_abs_diff_eq!(b, 2.0 * a, epsilon = 1e-15);
    }

    #[test]
    fn friction_cases() {
        assert_eq!(friction_constraint(0.0, 100.0, 0.6), (-60.0, -60.0));
        assert_eq!(friction_constraint(60.0, 100.0, 0.6), (0.0, -120.0));
        assert_eq!(friction_constraint(61.0, 100.0, 0.6), (1.0, -121.0));
    }

    #[test]
    fn grid_validation() {
        assert!(TranscriptionGrid::new(2, 0.01).is_err());
        assert!(TranscriptionGrid::new(10, 0.0).is_err());
        let g = TranscriptionGrid::with_duration(41, 0.4).unwrap();
        assert_abs_diff_eq!(g.dt, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(g.duration(), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn csv_roundtrips_f64_exactly() {
        let traj = single_knot_traj(1.0 / 3.0, -2.0 / 7.0, 0.01);
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|c| c.parse().unwrap())
            .collect();
        assert_eq!(row[11], 1.0 / 3.0);
        assert_eq!(row[12], -2.0 / 7.0);
    }
}
