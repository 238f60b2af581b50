//! Planar floating-base articulated rigid-body dynamics.
//!
//! Bodies live in the sagittal (x-z) plane; planar vectors use
//! `Vector2` with component 0 = x (forward) and component 1 = z (up).
//! Rotations are counterclockwise angles in that plane. Twists are stored
//! in Plücker world coordinates `(ω, v₀)` where `v₀` is the velocity of the
//! rigid velocity field evaluated at the world origin, which makes
//! propagation down the tree a plain sum.
//!
//! The model is a kinematic tree rooted at a floating base with
//! coordinates `q = (x_b, z_b, pitch_b, joint angles…)`; every non-base
//! coordinate is motorized. Matrix evaluators assemble by Jacobians
//! (Lagrangian assembly), which keeps every quantity directly checkable
//! against finite differences and per-link summation oracles.

use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("unknown body `{0}`")]
    UnknownBody(String),
    #[error("body {child} lists parent {parent}, which does not precede it")]
    BadTopology { child: usize, parent: usize },
    #[error("body `{name}`: {what} must be strictly positive, got {value}")]
    NonPositive {
        name: String,
        what: &'static str,
        value: f64,
    },
    #[error("state dimension {got} does not match model coordinate count {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("the first body must be the floating base (no parent)")]
    MissingBase,
}

/// 2D cross product `a × b` (pitch scalar, positive counterclockwise).
pub fn cross2(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// `ω × v` for scalar planar angular velocity: rotates `v` by +90°.
pub fn rot90(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

fn rot(angle: f64, v: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// One rigid body of the tree. The body frame sits at its inboard joint
/// (at the base reference point for the floating base).
#[derive(Debug, Clone)]
pub struct Body {
    pub name: String,
    /// Parent body index; `None` only for the floating base (body 0).
    pub parent: Option<usize>,
    /// Joint position in the parent frame.
    pub joint_origin: Vector2<f64>,
    pub mass: f64,
    /// Rotational inertia about the body COM (kg·m²).
    pub inertia: f64,
    /// COM position in the body frame.
    pub com: Vector2<f64>,
    /// Contact points in the body frame (feet carry heel and toe).
    pub contact_points: Vec<Vector2<f64>>,
    /// Torque limit of the joint driving this body (N·m); unused for the base.
    pub torque_limit: f64,
}

#[derive(Debug, Clone)]
pub struct RobotModel {
    bodies: Vec<Body>,
    gravity: f64,
}

impl RobotModel {
    pub fn new(bodies: Vec<Body>, gravity: f64) -> Result<Self, DynamicsError> {
        if bodies.is_empty() || bodies[0].parent.is_some() {
            return Err(DynamicsError::MissingBase);
        }
        for (i, b) in bodies.iter().enumerate() {
            match b.parent {
                None if i != 0 => return Err(DynamicsError::MissingBase),
                Some(p) if p >= i => {
                    return Err(DynamicsError::BadTopology {
                        child: i,
                        parent: p,
                    })
                }
                _ => {}
            }
            for (what, value) in [("mass", b.mass), ("inertia", b.inertia)] {
                if !(value > 0.0) {
                    return Err(DynamicsError::NonPositive {
                        name: b.name.clone(),
                        what,
                        value,
                    });
                }
            }
        }
        if !(gravity > 0.0) {
            return Err(DynamicsError::NonPositive {
                name: "model".into(),
                what: "gravity",
                value: gravity,
            });
        }
        Ok(Self { bodies, gravity })
    }

    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    /// Coordinate count: 3 base coordinates + one per joint.
    pub fn nq(&self) -> usize {
        2 + self.bodies.len()
    }

    /// Number of actuated coordinates (all joints).
    pub fn n_actuated(&self) -> usize {
        self.bodies.len() - 1
    }

    /// Coordinate index of the joint driving `body`.
    pub fn joint_coord(&self, body: usize) -> usize {
        2 + body
    }

    pub fn body_index(&self, name: &str) -> Result<usize, DynamicsError> {
        self.bodies
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| DynamicsError::UnknownBody(name.to_string()))
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies.iter().map(|b| b.mass).sum()
    }

    /// Bodies that declare contact points (the feet).
    pub fn feet(&self) -> Vec<usize> {
        (0..self.bodies.len())
            .filter(|&i| !self.bodies[i].contact_points.is_empty())
            .collect()
    }

    /// Per-joint torque limits in actuation order (joint of body 1, 2, …).
    pub fn torque_limits(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_actuated(),
            self.bodies.iter().skip(1).map(|b| b.torque_limit),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl RobotState {
    pub fn new(
        q: DVector<f64>,
        qdot: DVector<f64>,
        model: &RobotModel,
    ) -> Result<Self, DynamicsError> {
        let want = model.nq();
        if q.len() != want || qdot.len() != want {
            return Err(DynamicsError::DimMismatch {
                got: q.len().min(qdot.len()),
                want,
            });
        }
        Ok(Self { q, qdot })
    }

    pub fn zeros(model: &RobotModel) -> Self {
        Self {
            q: DVector::zeros(model.nq()),
            qdot: DVector::zeros(model.nq()),
        }
    }
}

/// An active contact: a body-frame point with its current world position.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactPoint {
    pub body: usize,
    pub local: Vector2<f64>,
    pub world: Vector2<f64>,
}

/// The set of active contact points (a subset of the model's foot points).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContactSet {
    pub points: Vec<ContactPoint>,
}

impl ContactSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Pose, twist and velocity-product acceleration of every body, plus the
/// world joint positions. Everything downstream reads from this.
#[derive(Debug, Clone)]
pub struct Kinematics {
    /// World angle of each body frame.
    pub angle: Vec<f64>,
    /// World position of each body frame origin (= its joint).
    pub origin: Vec<Vector2<f64>>,
    /// World COM position of each body.
    pub com: Vec<Vector2<f64>>,
    /// Plücker twist (ω, v₀) per body.
    pub twist: Vec<(f64, Vector2<f64>)>,
    /// Plücker velocity-product acceleration (α, a₀) per body (q̈ = 0).
    pub vp_accel: Vec<(f64, Vector2<f64>)>,
}

pub fn kinematics(model: &RobotModel, state: &RobotState) -> Kinematics {
    let nb = model.bodies.len();
    let q = &state.q;
    let qd = &state.qdot;

    let mut angle = vec![0.0; nb];
    let mut origin = vec![Vector2::zeros(); nb];
    let mut com = vec![Vector2::zeros(); nb];
    let mut twist = vec![(0.0, Vector2::zeros()); nb];
    let mut vp = vec![(0.0, Vector2::zeros()); nb];

    for i in 0..nb {
        match model.bodies[i].parent {
            None => {
                let p = Vector2::new(q[0], q[1]);
                angle[i] = q[2];
                origin[i] = p;
                // Base columns: two translations plus a rotation about the
                // moving base point. v₀ = ṗ − ω·rot90(p).
                let omega = qd[2];
                let v0 = Vector2::new(qd[0], qd[1]) - omega * rot90(p);
                twist[i] = (omega, v0);
                // Ṡ of the rotation column is (0, −rot90(ṗ)); the
                // translation columns are constant.
                let pdot = Vector2::new(qd[0], qd[1]);
                vp[i] = (0.0, -qd[2] * rot90(pdot));
            }
            Some(par) => {
                let joint_world = origin[par] + rot(angle[par], model.bodies[i].joint_origin);
                let qj = model.joint_coord(i);
                angle[i] = angle[par] + q[qj];
                origin[i] = joint_world;
                let (pw, pv0) = twist[par];
                // S = (1, −rot90(w)) for a revolute at world point w.
                let s_lin = -rot90(joint_world);
                twist[i] = (pw + qd[qj], pv0 + qd[qj] * s_lin);
                // Ṡ = (0, −rot90(ẇ)) with ẇ the joint-point velocity.
                let wdot = pv0 + pw * rot90(joint_world);
                let (pa, pa0) = vp[par];
                vp[i] = (pa, pa0 - qd[qj] * rot90(wdot));
            }
        }
        com[i] = origin[i] + rot(angle[i], model.bodies[i].com);
    }

    Kinematics {
        angle,
        origin,
        com,
        twist,
        vp_accel: vp,
    }
}

impl Kinematics {
    /// Velocity of the material point at world position `p` on body `b`.
    pub fn point_velocity(&self, b: usize, p: Vector2<f64>) -> Vector2<f64> {
        let (w, v0) = self.twist[b];
        v0 + w * rot90(p)
    }

    /// Acceleration of the material point at world position `p` on body `b`
    /// under zero generalized acceleration (the `J̇q̇` term).
    pub fn point_vp_accel(&self, b: usize, p: Vector2<f64>) -> Vector2<f64> {
        let (w, v0) = self.twist[b];
        let (alpha, a0) = self.vp_accel[b];
        a0 + alpha * rot90(p) + w * rot90(v0 + w * rot90(p))
    }

    /// World position of the body-frame point `local` on body `b`.
    pub fn point_world(&self, b: usize, local: Vector2<f64>) -> Vector2<f64> {
        self.origin[b] + rot(self.angle[b], local)
    }
}

/// Spatial Jacobian of body `b`: 3×n rows (ω; vx₀; vz₀) in Plücker world
/// coordinates.
fn spatial_jacobian(model: &RobotModel, kin: &Kinematics, b: usize) -> DMatrix<f64> {
    let n = model.nq();
    let mut j = DMatrix::zeros(3, n);
    // Base columns are shared by every body.
    j[(1, 0)] = 1.0;
    j[(2, 1)] = 1.0;
    let pb = kin.origin[0];
    let s_rot = -rot90(pb);
    j[(0, 2)] = 1.0;
    j[(1, 2)] = s_rot.x;
    j[(2, 2)] = s_rot.y;
    // Walk up the ancestor chain.
    let mut cur = b;
    while let Some(parent) = model.bodies[cur].parent {
        let qj = model.joint_coord(cur);
        let s_lin = -rot90(kin.origin[cur]);
        j[(0, qj)] = 1.0;
        j[(1, qj)] = s_lin.x;
        j[(2, qj)] = s_lin.y;
        cur = parent;
    }
    j
}

/// Point-velocity Jacobian (2×n) of the world point `p` on body `b`, plus
/// the velocity-product term `J̇q̇` (2-vector).
pub fn point_jacobian_world(
    model: &RobotModel,
    kin: &Kinematics,
    b: usize,
    p: Vector2<f64>,
) -> (DMatrix<f64>, Vector2<f64>) {
    let n = model.nq();
    let sj = spatial_jacobian(model, kin, b);
    let mut j = DMatrix::zeros(2, n);
    for c in 0..n {
        let w = sj[(0, c)];
        let lin = Vector2::new(sj[(1, c)], sj[(2, c)]) + w * rot90(p);
        j[(0, c)] = lin.x;
        j[(1, c)] = lin.y;
    }
    (j, kin.point_vp_accel(b, p))
}

/// Point Jacobian for a body-frame point (resolves the world position
/// first).
pub fn point_jacobian(
    model: &RobotModel,
    state: &RobotState,
    body: usize,
    local: Vector2<f64>,
) -> (DMatrix<f64>, Vector2<f64>) {
    let kin = kinematics(model, state);
    let p = kin.point_world(body, local);
    point_jacobian_world(model, &kin, body, p)
}

/// Orientation Jacobian row (1×n) of body `b` and its `J̇q̇` scalar. The
/// planar angular velocity of a body is a plain sum of ancestor joint
/// rates, so the row is constant and the velocity-product term is zero.
pub fn orientation_jacobian(model: &RobotModel, b: usize) -> (DMatrix<f64>, f64) {
    let n = model.nq();
    let mut j = DMatrix::zeros(1, n);
    j[(0, 2)] = 1.0;
    let mut cur = b;
    while let Some(parent) = model.bodies[cur].parent {
        j[(0, model.joint_coord(cur))] = 1.0;
        cur = parent;
    }
    (j, 0.0)
}

/// Mass matrix by Lagrangian assembly: `M = Σ m JᵀJ + I JωᵀJω` over link
/// COMs. Symmetric positive definite for positive link masses/inertias.
pub fn mass_matrix(model: &RobotModel, state: &RobotState) -> DMatrix<f64> {
    let n = model.nq();
    let kin = kinematics(model, state);
    let mut m = DMatrix::zeros(n, n);
    let mut cols: Vec<(f64, Vector2<f64>)> = vec![(0.0, Vector2::zeros()); n];
    for (i, body) in model.bodies.iter().enumerate() {
        let sj = spatial_jacobian(model, &kin, i);
        let p = kin.com[i];
        for (c, col) in cols.iter_mut().enumerate() {
            let w = sj[(0, c)];
            *col = (w, Vector2::new(sj[(1, c)], sj[(2, c)]) + w * rot90(p));
        }
        for a in 0..n {
            let (wa, la) = cols[a];
            for b in a..n {
                let (wb, lb) = cols[b];
                let contrib = body.mass * la.dot(&lb) + body.inertia * wa * wb;
                m[(a, b)] += contrib;
                if a != b {
                    m[(b, a)] += contrib;
                }
            }
        }
    }
    m
}

/// Bias forces `V(q, q̇) + G(q)`: generalized forces that must be applied to
/// hold zero acceleration. With `q̇ = 0` this is the pure gravity vector.
pub fn bias_forces(model: &RobotModel, state: &RobotState) -> DVector<f64> {
    let n = model.nq();
    let kin = kinematics(model, state);
    let g_vec = Vector2::new(0.0, -model.gravity);
    let mut bias = DVector::zeros(n);
    for (i, body) in model.bodies.iter().enumerate() {
        let sj = spatial_jacobian(model, &kin, i);
        let p = kin.com[i];
        let a_com = kin.point_vp_accel(i, p);
        let (alpha, _) = kin.vp_accel[i];
        let f = body.mass * (a_com - g_vec);
        let n_torque = body.inertia * alpha;
        for c in 0..n {
            let w = sj[(0, c)];
            let lin = Vector2::new(sj[(1, c)], sj[(2, c)]) + w * rot90(p);
            bias[c] += lin.dot(&f) + w * n_torque;
        }
    }
    bias
}

/// COM Jacobian (2×n) and its velocity-product term: mass-weighted average
/// of the per-link COM Jacobians.
pub fn com_jacobian(model: &RobotModel, state: &RobotState) -> (DMatrix<f64>, Vector2<f64>) {
    let n = model.nq();
    let kin = kinematics(model, state);
    let m_tot = model.total_mass();
    let mut j = DMatrix::zeros(2, n);
    let mut jdqd = Vector2::zeros();
    for (i, body) in model.bodies.iter().enumerate() {
        let sj = spatial_jacobian(model, &kin, i);
        let p = kin.com[i];
        for c in 0..n {
            let w = sj[(0, c)];
            let lin = Vector2::new(sj[(1, c)], sj[(2, c)]) + w * rot90(p);
            j[(0, c)] += body.mass * lin.x / m_tot;
            j[(1, c)] += body.mass * lin.y / m_tot;
        }
        jdqd += body.mass * kin.point_vp_accel(i, p) / m_tot;
    }
    (j, jdqd)
}

/// World COM position and velocity of the whole robot.
pub fn com_position_velocity(
    model: &RobotModel,
    state: &RobotState,
) -> (Vector2<f64>, Vector2<f64>) {
    let kin = kinematics(model, state);
    let m_tot = model.total_mass();
    let mut p = Vector2::zeros();
    let mut v = Vector2::zeros();
    for (i, body) in model.bodies.iter().enumerate() {
        p += body.mass * kin.com[i] / m_tot;
        v += body.mass * kin.point_velocity(i, kin.com[i]) / m_tot;
    }
    (p, v)
}

/// Pitch row of the centroidal momentum matrix (1×n) and the scalar
/// `Ȧ_r q̇`. `A_r q̇` is the total angular momentum about the instantaneous
/// COM.
pub fn centroidal_momentum_pitch(model: &RobotModel, state: &RobotState) -> (DMatrix<f64>, f64) {
    let n = model.nq();
    let kin = kinematics(model, state);
    let (p_com, _) = com_position_velocity(model, state);
    let mut a_r = DMatrix::zeros(1, n);
    let mut adot_qdot = 0.0;
    for (i, body) in model.bodies.iter().enumerate() {
        let sj = spatial_jacobian(model, &kin, i);
        let p = kin.com[i];
        let arm = p - p_com;
        for c in 0..n {
            let w = sj[(0, c)];
            let lin = Vector2::new(sj[(1, c)], sj[(2, c)]) + w * rot90(p);
            a_r[(0, c)] += body.inertia * w + body.mass * cross2(arm, lin);
        }
        // ḣ_r with q̈ = 0; the Σ m (v_i − v_com) × v_i terms cancel in the
        // total, leaving inertial and moment-arm acceleration terms only.
        let (alpha, _) = kin.vp_accel[i];
        let a_com = kin.point_vp_accel(i, p);
        adot_qdot += body.inertia * alpha + body.mass * cross2(arm, a_com);
    }
    (a_r, adot_qdot)
}

/// Total angular momentum about the robot COM for the current state.
pub fn pitch_momentum(model: &RobotModel, state: &RobotState) -> f64 {
    let (a_r, _) = centroidal_momentum_pitch(model, state);
    (a_r * &state.qdot)[0]
}

/// Actuation matrix `S_a` (n_act × n): selects the joint coordinates.
pub fn actuation_matrix(model: &RobotModel) -> DMatrix<f64> {
    let na = model.n_actuated();
    let n = model.nq();
    let mut s = DMatrix::zeros(na, n);
    for j in 0..na {
        s[(j, 3 + j)] = 1.0;
    }
    s
}

/// External point force applied to a body.
#[derive(Debug, Clone)]
pub struct AppliedForce {
    pub body: usize,
    /// Application point in the body frame.
    pub local: Vector2<f64>,
    /// World-frame force (N).
    pub force: Vector2<f64>,
}

/// Residual of the equations of motion
/// `M q̈ + V + G − S_aᵀτ − Σ Jᵀ F`; zero for a consistent triple.
pub fn inverse_dynamics_check(
    model: &RobotModel,
    state: &RobotState,
    qddot: &DVector<f64>,
    tau: &DVector<f64>,
    forces: &[AppliedForce],
) -> DVector<f64> {
    let m = mass_matrix(model, state);
    let bias = bias_forces(model, state);
    let s_a = actuation_matrix(model);
    let mut residual = m * qddot + bias - s_a.transpose() * tau;
    let kin = kinematics(model, state);
    for f in forces {
        let p = kin.point_world(f.body, f.local);
        let (j, _) = point_jacobian_world(model, &kin, f.body, p);
        residual -= j.transpose() * DVector::from_column_slice(&[f.force.x, f.force.y]);
    }
    residual
}

/// Forward dynamics without contact: `q̈ = M⁻¹(S_aᵀτ − V − G + Σ JᵀF)`.
pub fn forward_dynamics(
    model: &RobotModel,
    state: &RobotState,
    tau: &DVector<f64>,
    forces: &[AppliedForce],
) -> DVector<f64> {
    let m = mass_matrix(model, state);
    let bias = bias_forces(model, state);
    let s_a = actuation_matrix(model);
    let mut rhs = s_a.transpose() * tau - bias;
    let kin = kinematics(model, state);
    for f in forces {
        let p = kin.point_world(f.body, f.local);
        let (j, _) = point_jacobian_world(model, &kin, f.body, p);
        rhs += j.transpose() * DVector::from_column_slice(&[f.force.x, f.force.y]);
    }
    nalgebra::Cholesky::new(m)
        .expect("mass matrix must be SPD")
        .solve(&rhs)
}

/// Total mechanical energy (kinetic + gravitational) of the robot.
pub fn mechanical_energy(model: &RobotModel, state: &RobotState) -> f64 {
    let kin = kinematics(model, state);
    let mut e = 0.0;
    for (i, body) in model.bodies.iter().enumerate() {
        let v = kin.point_velocity(i, kin.com[i]);
        let (w, _) = kin.twist[i];
        e += 0.5 * body.mass * v.norm_squared() + 0.5 * body.inertia * w * w;
        e += body.mass * model.gravity * kin.com[i].y;
    }
    e
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    use super::*;

    /// Single free planar body, COM at the frame origin.
    pub fn free_body(mass: f64, inertia: f64) -> RobotModel {
        RobotModel::new(
            vec![Body {
                name: "base".into(),
                parent: None,
                joint_origin: Vector2::zeros(),
                mass,
                inertia,
                com: Vector2::zeros(),
                contact_points: vec![],
                torque_limit: 0.0,
            }],
            9.81,
        )
        .unwrap()
    }

    /// Base plus a single pendulum link: the articulated minimal fixture.
    pub fn base_plus_pendulum(m_link: f64, i_link: f64, l_c: f64) -> RobotModel {
        RobotModel::new(
            vec![
                Body {
                    name: "base".into(),
                    parent: None,
                    joint_origin: Vector2::zeros(),
                    mass: 5.0,
                    inertia: 0.4,
                    com: Vector2::zeros(),
                    contact_points: vec![],
                    torque_limit: 0.0,
                },
                Body {
                    name: "link".into(),
                    parent: Some(0),
                    joint_origin: Vector2::new(0.1, -0.2),
                    mass: m_link,
                    inertia: i_link,
                    com: Vector2::new(0.0, -l_c),
                    contact_points: vec![],
                    torque_limit: 30.0,
                },
            ],
            9.81,
        )
        .unwrap()
    }

    /// Four-body fixture: base, two-link leg with a foot patch, one arm.
    pub fn articulated() -> RobotModel {
        RobotModel::new(
            vec![
                Body {
                    name: "base".into(),
                    parent: None,
                    joint_origin: Vector2::zeros(),
                    mass: 10.0,
                    inertia: 0.8,
                    com: Vector2::new(0.02, 0.1),
                    contact_points: vec![],
                    torque_limit: 0.0,
                },
                Body {
                    name: "thigh".into(),
                    parent: Some(0),
                    joint_origin: Vector2::new(0.0, -0.15),
                    mass: 3.0,
                    inertia: 0.05,
                    com: Vector2::new(0.0, -0.2),
                    contact_points: vec![],
                    torque_limit: 100.0,
                },
                Body {
                    name: "shank".into(),
                    parent: Some(1),
                    joint_origin: Vector2::new(0.0, -0.4),
                    mass: 2.0,
                    inertia: 0.03,
                    com: Vector2::new(0.0, -0.18),
                    contact_points: vec![Vector2::new(-0.06, -0.4), Vector2::new(0.1, -0.4)],
                    torque_limit: 100.0,
                },
                Body {
                    name: "arm".into(),
                    parent: Some(0),
                    joint_origin: Vector2::new(0.0, 0.3),
                    mass: 2.0,
                    inertia: 0.02,
                    com: Vector2::new(0.0, -0.3),
                    contact_points: vec![],
                    torque_limit: 40.0,
                },
            ],
            9.81,
        )
        .unwrap()
    }

    pub fn random_state(model: &RobotModel, rng: &mut impl rand::Rng) -> RobotState {
        let n = model.nq();
        RobotState {
            q: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
            qdot: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_fixtures::*;
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn free_body_mass_matrix_is_diagonal() {
        let model = free_body(7.0, 0.9);
        let state = RobotState::zeros(&model);
        let m = mass_matrix(&model, &state);
        let expect = DMatrix::from_diagonal(&DVector::from_column_slice(&[7.0, 7.0, 0.9]));
        assert!((m - expect).amax() < 1e-12);
    }

    #[test]
    fn mass_matrix_symmetric_on_random_states() {
        let model = articulated();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let state = random_state(&model, &mut rng);
            let m = mass_matrix(&model, &state);
            assert!((&m - m.transpose()).amax() <= 1e-12);
        }
    }

    #[test]
    fn mass_matrix_spd_on_many_random_states() {
        let model = articulated();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let state = random_state(&model, &mut rng);
            assert!(
                nalgebra::Cholesky::new(mass_matrix(&model, &state)).is_some(),
                "mass matrix not SPD at q = {:?}",
                state.q
            );
        }
    }

    #[test]
    fn pendulum_joint_inertia_matches_analytic() {
        // M_jj for a link is I + m·l_c² (rotation about its own joint).
        let (m_l, i_l, l_c) = (2.5, 0.04, 0.27);
        let model = base_plus_pendulum(m_l, i_l, l_c);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let state = random_state(&model, &mut rng);
            let m = mass_matrix(&model, &state);
            let j = model.joint_coord(1);
            assert_abs_diff_eq!(m[(j, j)], i_l + m_l * l_c * l_c, epsilon = 1e-12);
        }
    }

    #[test]
    fn gravity_vector_at_rest() {
        let model = articulated();
        let mut state = RobotState::zeros(&model);
        state.q[2] = 0.3;
        state.q[3] = -0.5;
        let g = bias_forces(&model, &state);
        // Horizontal base component zero, vertical carries the total weight.
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], model.total_mass() * 9.81, epsilon = 1e-10);
    }

    #[test]
    fn coriolis_is_quadratic_in_velocity() {
        let model = articulated();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let state = random_state(&model, &mut rng);
            let rest = RobotState {
                q: state.q.clone(),
                qdot: DVector::zeros(model.nq()),
            };
            let g = bias_forces(&model, &rest);
            let v1 = bias_forces(&model, &state) - &g;
            let doubled = RobotState {
                q: state.q.clone(),
                qdot: 2.0 * &state.qdot,
            };
            let v2 = bias_forces(&model, &doubled) - &g;
            assert!((v2 - 4.0 * v1).amax() < 1e-9);
        }
    }

    #[test]
    fn power_balance_against_energy_derivative() {
        // q̇ᵀ(M q̈ + V + G) must equal d/dt(T + U) for any motion.
        let model = articulated();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let state = random_state(&model, &mut rng);
            let qdd = DVector::from_fn(model.nq(), |_, _| rng.gen_range(-1.0..1.0));
            let m = mass_matrix(&model, &state);
            let bias = bias_forces(&model, &state);
            let power = state.qdot.dot(&(m * &qdd + bias));

            let h = 1e-6;
            let advance = |dir: f64| RobotState {
                q: &state.q + dir * h * &state.qdot + 0.5 * h * h * &qdd,
                qdot: &state.qdot + dir * h * &qdd,
            };
            let e_plus = mechanical_energy(&model, &advance(1.0));
            let e_minus = mechanical_energy(&model, &advance(-1.0));
            let dedt = (e_plus - e_minus) / (2.0 * h);
            assert_abs_diff_eq!(power, dedt, epsilon = 1e-4 * (1.0 + power.abs()));
        }
    }

    #[test]
    fn base_point_jacobian_has_identity_translation_block() {
        let model = articulated();
        let state = RobotState::zeros(&model);
        let (j, _) = point_jacobian(&model, &state, 0, Vector2::new(0.05, 0.02));
        assert_abs_diff_eq!(j[(0, 0)], 1.0);
        assert_abs_diff_eq!(j[(1, 1)], 1.0);
        assert_abs_diff_eq!(j[(1, 0)], 0.0);
        assert_abs_diff_eq!(j[(0, 1)], 0.0);
    }

    #[test]
    fn point_jacobian_matches_finite_difference_position() {
        let model = articulated();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let local = Vector2::new(0.07, -0.12);
        for _ in 0..50 {
            let state = random_state(&model, &mut rng);
            let (j, _) = point_jacobian(&model, &state, 2, local);
            let jv = &j * &state.qdot;

            let h = 1e-7;
            let pos = |q: &DVector<f64>| {
                let s = RobotState {
                    q: q.clone(),
                    qdot: DVector::zeros(model.nq()),
                };
                kinematics(&model, &s).point_world(2, local)
            };
            let p_plus = pos(&(&state.q + h * &state.qdot));
            let p_minus = pos(&(&state.q - h * &state.qdot));
            let fd = (p_plus - p_minus) / (2.0 * h);
            assert!((Vector2::new(jv[0], jv[1]) - fd).norm() <= 1e-6 * (1.0 + fd.norm()));
        }
    }

    #[test]
    fn jdot_qdot_matches_finite_difference_of_point_velocity() {
        let model = articulated();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let local = Vector2::new(-0.03, -0.2);
        for _ in 0..50 {
            let state = random_state(&model, &mut rng);
            let (_, jdqd) = point_jacobian(&model, &state, 3, local);

            // d/dt (J q̇) with q̈ = 0 along the flow.
            let h = 1e-6;
            let vel = |dir: f64| {
                let s = RobotState {
                    q: &state.q + dir * h * &state.qdot,
                    qdot: state.qdot.clone(),
                };
                let kin = kinematics(&model, &s);
                let p = kin.point_world(3, local);
                kin.point_velocity(3, p)
            };
            let fd = (vel(1.0) - vel(-1.0)) / (2.0 * h);
            assert!(
                (jdqd - fd).norm() <= 1e-5 * (1.0 + fd.norm()),
                "jdot_qdot {jdqd:?} vs fd {fd:?}"
            );
        }
    }

    #[test]
    fn com_jacobian_gives_momentum_over_mass() {
        let model = articulated();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let state = random_state(&model, &mut rng);
            let (j, _) = com_jacobian(&model, &state);
            let v = &j * &state.qdot;
            // Oracle: sum the per-link momenta directly.
            let kin = kinematics(&model, &state);
            let mut momentum = Vector2::zeros();
            for (i, body) in model.bodies().iter().enumerate() {
                momentum += body.mass * kin.point_velocity(i, kin.com[i]);
            }
            let expect = momentum / model.total_mass();
            assert!((Vector2::new(v[0], v[1]) - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn com_jacobian_single_body_equals_point_jacobian() {
        let model = free_body(3.0, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let state = random_state(&model, &mut rng);
        let (jc, dc) = com_jacobian(&model, &state);
        let (jp, dp) = point_jacobian(&model, &state, 0, Vector2::zeros());
        assert!((jc - jp).amax() < 1e-12);
        assert!((dc - dp).norm() < 1e-12);
    }

    #[test]
    fn com_jacobian_arm_columns_nonzero() {
        let model = articulated();
        let mut state = RobotState::zeros(&model);
        state.q[model.joint_coord(3)] = 0.4; // arm joint bent
        let (j, _) = com_jacobian(&model, &state);
        let arm_col = model.joint_coord(3);
        assert!(j[(0, arm_col)].abs() + j[(1, arm_col)].abs() > 1e-6);
    }

    #[test]
    fn centroidal_momentum_zero_at_rest_and_in_pure_translation() {
        let model = articulated();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let mut state = random_state(&model, &mut rng);
        state.qdot.fill(0.0);
        assert_eq!(pitch_momentum(&model, &state), 0.0);

        state.qdot[0] = 0.7;
        state.qdot[1] = -0.4;
        assert_abs_diff_eq!(pitch_momentum(&model, &state), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn centroidal_momentum_matches_link_summation() {
        let model = articulated();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..100 {
            let state = random_state(&model, &mut rng);
            let h_matrix = pitch_momentum(&model, &state);
            // Link-by-link oracle.
            let kin = kinematics(&model, &state);
            let (p_com, _) = com_position_velocity(&model, &state);
            let mut h_sum = 0.0;
            for (i, body) in model.bodies().iter().enumerate() {
                let (w, _) = kin.twist[i];
                let v = kin.point_velocity(i, kin.com[i]);
                h_sum += body.inertia * w + body.mass * cross2(kin.com[i] - p_com, v);
            }
            assert_abs_diff_eq!(h_matrix, h_sum, epsilon = 1e-10);
        }
    }

    #[test]
    fn centroidal_rate_matches_finite_difference() {
        // Ȧ_r q̇ = d/dt(A_r q̇) along the flow with q̈ = 0.
        let model = articulated();
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..30 {
            let state = random_state(&model, &mut rng);
            let (_, adot_qdot) = centroidal_momentum_pitch(&model, &state);
            let h = 1e-6;
            let hr = |dir: f64| {
                let s = RobotState {
                    q: &state.q + dir * h * &state.qdot,
                    qdot: state.qdot.clone(),
                };
                pitch_momentum(&model, &s)
            };
            let fd = (hr(1.0) - hr(-1.0)) / (2.0 * h);
            assert_abs_diff_eq!(adot_qdot, fd, epsilon = 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn inverse_dynamics_zero_for_free_fall() {
        let model = articulated();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let state = random_state(&model, &mut rng);
        let tau = DVector::zeros(model.n_actuated());
        let qdd = forward_dynamics(&model, &state, &tau, &[]);
        let residual = inverse_dynamics_check(&model, &state, &qdd, &tau, &[]);
        assert!(residual.amax() < 1e-9);
    }

    #[test]
    fn inverse_dynamics_consistent_random_triples() {
        let model = articulated();
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..30 {
            let state = random_state(&model, &mut rng);
            let tau = DVector::from_fn(model.n_actuated(), |_, _| rng.gen_range(-20.0..20.0));
            let force = AppliedForce {
                body: 2,
                local: Vector2::new(0.1, -0.4),
                force: Vector2::new(rng.gen_range(-50.0..50.0), rng.gen_range(0.0..200.0)),
            };
            let qdd = forward_dynamics(&model, &state, &tau, std::slice::from_ref(&force));
            let residual = inverse_dynamics_check(&model, &state, &qdd, &tau, &[force]);
            assert!(residual.amax() < 1e-9, "residual {}", residual.amax());
        }
    }

    #[test]
    fn static_equilibrium_with_balancing_contact() {
        // Weight carried by a vertical contact force through the COM:
        // residual of the equations of motion ~ 0.
        let model = free_body(12.0, 1.1);
        let state = RobotState::zeros(&model);
        let force = AppliedForce {
            body: 0,
            local: Vector2::zeros(),
            force: Vector2::new(0.0, 12.0 * 9.81),
        };
        let residual = inverse_dynamics_check(
            &model,
            &state,
            &DVector::zeros(3),
            &DVector::zeros(0),
            &[force],
        );
        assert!(residual.amax() < 1e-10);
    }

    #[test]
    fn torque_free_flight_conserves_energy() {
        // RK4 at dt=1e-4 for one simulated second; drift ≤ 1e-5 J.
        let model = articulated();
        let mut state = RobotState::zeros(&model);
        state.q[1] = 5.0;
        state.q[3] = 0.4;
        state.q[4] = -0.7;
        state.qdot[0] = 0.5;
        state.qdot[1] = 2.0;
        state.qdot[2] = 1.0;
        state.qdot[4] = -2.0;
        let e0 = mechanical_energy(&model, &state);
        let tau = DVector::zeros(model.n_actuated());
        let dt = 1e-4;
        let deriv = |s: &RobotState| {
            let qdd = forward_dynamics(&model, s, &tau, &[]);
            (s.qdot.clone(), qdd)
        };
        for _ in 0..10_000 {
            let (k1q, k1v) = deriv(&state);
            let s2 = RobotState {
                q: &state.q + 0.5 * dt * &k1q,
                qdot: &state.qdot + 0.5 * dt * &k1v,
            };
            let (k2q, k2v) = deriv(&s2);
            let s3 = RobotState {
                q: &state.q + 0.5 * dt * &k2q,
                qdot: &state.qdot + 0.5 * dt * &k2v,
            };
            let (k3q, k3v) = deriv(&s3);
            let s4 = RobotState {
                q: &state.q + dt * &k3q,
                qdot: &state.qdot + dt * &k3v,
            };
            let (k4q, k4v) = deriv(&s4);
            state.q += dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
            state.qdot += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        let drift = (mechanical_energy(&model, &state) - e0).abs();
        assert!(drift <= 1e-5, "energy drift {drift} J over 1 s");
    }

    #[test]
    fn unknown_body_is_an_error() {
        let model = articulated();
        assert_eq!(
            model.body_index("no_such_link"),
            Err(DynamicsError::UnknownBody("no_such_link".into()))
        );
    }

    #[test]
    fn bad_topology_rejected() {
        let mut bodies = vec![
            Body {
                name: "base".into(),
                parent: None,
                joint_origin: Vector2::zeros(),
                mass: 1.0,
                inertia: 0.1,
                com: Vector2::zeros(),
                contact_points: vec![],
                torque_limit: 0.0,
            },
            Body {
                name: "a".into(),
                parent: Some(2),
                joint_origin: Vector2::zeros(),
                mass: 1.0,
                inertia: 0.1,
                com: Vector2::zeros(),
                contact_points: vec![],
                torque_limit: 1.0,
            },
        ];
        assert!(matches!(
            RobotModel::new(bodies.clone(), 9.81),
            Err(DynamicsError::BadTopology { .. })
        ));
        bodies[1].parent = Some(0);
        bodies[1].mass = -1.0;
        assert!(matches!(
            RobotModel::new(bodies, 9.81),
            Err(DynamicsError::NonPositive { .. })
        ));
    }
}
