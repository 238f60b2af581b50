//! Flywheel-augmented SLIP template model.
//!
//! A point mass on a massless springy leg with a flywheel attached at the
//! mass. The flywheel captures the rotational part of the centroidal
//! dynamics (the swing arms of the full robot); the spring leg captures the
//! hopping dynamics of the COM.
//!
//! Conventions used throughout the crate:
//! - world frame: x right, z up,
//! - the leg angle `beta` is measured from the vertical, positive when the
//!   COM is ahead (+x) of the foot, so in stance
//!   `x = x_foot + r·sin(beta)`, `z = r·cos(beta)`,
//! - angles and angular momenta are positive counterclockwise in the x-z
//!   plane.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FslipError {
    #[error("leg length must be positive, got {0}")]
    NonPositiveLegLength(f64),
    #[error("invalid template parameter {name}: {value} (must be strictly positive)")]
    NonPositiveParam { name: &'static str, value: f64 },
}

/// Constants of the template model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FslipParams {
    /// Total mass (kg).
    pub m: f64,
    /// Flywheel rotational inertia (kg·m²).
    pub i_fly: f64,
    /// Leg spring stiffness (N/m).
    pub k: f64,
    /// Natural leg length (m).
    pub r0: f64,
    /// Gravity, positive scalar (m/s²).
    pub g: f64,
}

impl FslipParams {
    pub fn new(m: f64, i_fly: f64, k: f64, r0: f64, g: f64) -> Result<Self, FslipError> {
        for (name, value) in [("m", m), ("i_fly", i_fly), ("k", k), ("r0", r0), ("g", g)] {
            if !(value > 0.0) {
                return Err(FslipError::NonPositiveParam { name, value });
            }
        }
        Ok(Self { m, i_fly, k, r0, g })
    }

    /// Leg length at which the spring exactly supports the weight
    /// (`k·(r0 − r) = m·g` with the leg vertical).
    pub fn equilibrium_leg_length(&self) -> f64 {
        self.r0 - self.m * self.g / self.k
    }
}

/// Template state: COM position/velocity, flywheel angle/rate, leg
/// length/angle and their rates.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct FslipState {
    pub x: f64,
    pub z: f64,
    pub xdot: f64,
    pub zdot: f64,
    pub theta: f64,
    pub thetadot: f64,
    pub r: f64,
    pub rdot: f64,
    pub beta: f64,
    pub betadot: f64,
}

impl FslipState {
    /// Residual of the stance kinematic map relative to a foot anchored at
    /// `x_foot` on the ground: `(x − x_foot − r·sin β, z − r·cos β)`.
    pub fn stance_residual(&self, x_foot: f64) -> (f64, f64) {
        (
            self.x - x_foot - self.r * self.beta.sin(),
            self.z - self.r * self.beta.cos(),
        )
    }

    /// Static equilibrium above a foot at the origin: leg vertical, spring
    /// compressed just enough to carry the weight.
    pub fn equilibrium(params: &FslipParams) -> Self {
        let r = params.equilibrium_leg_length();
        Self {
            z: r,
            r,
            ..Self::default()
        }
    }
}

/// Template controls: flywheel torque and commanded leg-length acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct FslipControl {
    /// Torque on the flywheel (N·m).
    pub tau: f64,
    /// Commanded leg-length acceleration (m/s²).
    pub rddot: f64,
}

/// Second derivatives of the COM coordinates and the flywheel angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianAccel {
    pub xddot: f64,
    pub zddot: f64,
    pub thetaddot: f64,
}

/// Spring force `k·(r0 − r)`. Negative when the leg is extended beyond its
/// natural length; no clamping.
pub fn spring_force(r: f64, params: &FslipParams) -> Result<f64, FslipError> {
    if !(r > 0.0) {
        return Err(FslipError::NonPositiveLegLength(r));
    }
    Ok(params.k * (params.r0 - r))
}

/// Stance-phase COM and flywheel accelerations:
///
/// ```text
/// m ẍ = −(τ/r) cos β + Fs sin β
/// m z̈ = −m g + (τ/r) sin β + Fs cos β
/// I θ̈ = τ
/// ```
pub fn stance_dynamics(
    state: &FslipState,
    control: &FslipControl,
    params: &FslipParams,
) -> Result<CartesianAccel, FslipError> {
    let fs = spring_force(state.r, params)?;
    let (sb, cb) = state.beta.sin_cos();
    let tau_over_r = control.tau / state.r;
    Ok(CartesianAccel {
        xddot: (-tau_over_r * cb + fs * sb) / params.m,
        zddot: -params.g + (tau_over_r * sb + fs * cb) / params.m,
        thetaddot: control.tau / params.i_fly,
    })
}

/// Flight-phase accelerations: the COM coasts ballistically, the flywheel
/// still responds to torque (zero unless a planner provides it), leg
/// coordinates evolve per commanded rates since the leg is massless.
pub fn flight_dynamics(
    _state: &FslipState,
    control: &FslipControl,
    params: &FslipParams,
) -> CartesianAccel {
    CartesianAccel {
        xddot: 0.0,
        zddot: -params.g,
        thetaddot: control.tau / params.i_fly,
    }
}

/// Net ground reaction force implied by the stance dynamics:
/// `Fz = Fs·cos β + (τ/r)·sin β`, `Fx = Fs·sin β − (τ/r)·cos β`.
pub fn ground_reaction(
    state: &FslipState,
    control: &FslipControl,
    params: &FslipParams,
) -> Result<(f64, f64), FslipError> {
    let fs = spring_force(state.r, params)?;
    let (sb, cb) = state.beta.sin_cos();
    let tau_over_r = control.tau / state.r;
    Ok((fs * sb - tau_over_r * cb, fs * cb + tau_over_r * sb))
}

/// Total mechanical energy: COM kinetic + gravitational + spring + flywheel
/// kinetic.
pub fn mechanical_energy(state: &FslipState, params: &FslipParams) -> f64 {
    0.5 * params.m * (state.xdot * state.xdot + state.zdot * state.zdot)
        + params.m * params.g * state.z
        + 0.5 * params.k * (params.r0 - state.r) * (params.r0 - state.r)
        + 0.5 * params.i_fly * state.thetadot * state.thetadot
}
