//! Per-phase whole-body control as a quadratic program.
//!
//! Decision variables are the stacked `(q̈, τ, F)`: generalized
//! accelerations, actuated joint torques and planar contact forces (one
//! `(Fx, Fz)` pair per active contact point; the `F` block is absent in
//! flight). Tasks are combined as weighted soft costs
//! `Σ_k ‖J_k q̈ + J̇_k q̇ − ẍ_{c,k}‖²_{W_k} + ε‖(q̈, τ, F)‖²` subject to the
//! full dynamics, the contact constraint `J q̈ + J̇q̇ = 0`, the friction
//! cone, unilateral normal forces, and torque limits.

use crate::dynamics::{
    self, actuation_matrix, bias_forces, centroidal_momentum_pitch, com_jacobian,
    com_position_velocity, mass_matrix, orientation_jacobian, point_jacobian_world, ContactSet,
    RobotModel, RobotState,
};
use crate::qp::{self, QpError, QpProblemData};
use crate::sim::Phase;
use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WbcError {
    #[error("task `{task:?}` is not valid in phase {phase:?}")]
    PhaseTaskMismatch { task: TaskKind, phase: Phase },
    #[error("flight-phase problems take no contact points, got {0}")]
    ContactInFlight(usize),
    #[error("gain matrices must be non-negative, got {0}")]
    NegativeGain(f64),
    #[error("weight must be non-negative, got {0}")]
    NegativeWeight(f64),
    #[error("dimension mismatch: {0}")]
    Dims(String),
    #[error("QP solve failed: {0}")]
    Solve(#[from] QpError),
}

/// Which objective a task encodes; used to validate task/phase pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// COM trajectory tracking (stance and landing).
    Com,
    /// Drive the pitch centroidal momentum rate to zero (jumping).
    AngularMomentum,
    /// Foot point trajectory tracking (flight).
    FootTracking,
    /// Keep the foot level (flight).
    FootLevel,
    /// Keep the torso level (landing).
    TorsoLevel,
    /// Joint-space position hold (arm locking, valid in any phase).
    JointHold,
}

/// Diagonal PD gains for a task.
#[derive(Debug, Clone)]
pub struct TaskGains {
    pub kp: DVector<f64>,
    pub kd: DVector<f64>,
}

impl TaskGains {
    pub fn new(kp: DVector<f64>, kd: DVector<f64>) -> Result<Self, WbcError> {
        if let Some(&bad) = kp.iter().chain(kd.iter()).find(|&&v| v < 0.0) {
            return Err(WbcError::NegativeGain(bad));
        }
        if kp.len() != kd.len() {
            return Err(WbcError::Dims(format!(
                "kp has {}, kd has {}",
                kp.len(),
                kd.len()
            )));
        }
        Ok(Self { kp, kd })
    }

    /// Uniform gains of the given dimension, critically damped when
    /// `kd = 2√kp`.
    pub fn uniform(dim: usize, kp: f64, kd: f64) -> Result<Self, WbcError> {
        Self::new(
            DVector::from_element(dim, kp),
            DVector::from_element(dim, kd),
        )
    }
}

/// One task: rows of `J q̈ + J̇q̇` driven toward a commanded acceleration
/// under a diagonal weight.
#[derive(Debug, Clone)]
pub struct WbcTask {
    pub kind: TaskKind,
    pub jacobian: DMatrix<f64>,
    pub jdot_qdot: DVector<f64>,
    pub xddot_cmd: DVector<f64>,
    /// Diagonal of the (PSD) task weight matrix.
    pub weight: DVector<f64>,
}

impl WbcTask {
    fn validate(&self) -> Result<(), WbcError> {
        let rows = self.jacobian.nrows();
        if self.jdot_qdot.len() != rows || self.xddot_cmd.len() != rows || self.weight.len() != rows
        {
            return Err(WbcError::Dims(format!(
                "task {:?}: {} rows vs {}/{}/{}",
                self.kind,
                rows,
                self.jdot_qdot.len(),
                self.xddot_cmd.len(),
                self.weight.len()
            )));
        }
        if let Some(&bad) = self.weight.iter().find(|&&w| w < 0.0) {
            return Err(WbcError::NegativeWeight(bad));
        }
        Ok(())
    }

    /// Achieved-minus-commanded task acceleration for a given `q̈`.
    pub fn residual(&self, qddot: &DVector<f64>) -> DVector<f64> {
        &self.jacobian * qddot + &self.jdot_qdot - &self.xddot_cmd
    }
}

/// Feedforward-plus-PD commanded acceleration:
/// `ẍ_c = ẍ_d + K_D(ẋ_d − ẋ) + K_P(x_d − x)`.
pub fn commanded_acceleration(
    pos_d: &DVector<f64>,
    vel_d: &DVector<f64>,
    acc_d: &DVector<f64>,
    pos: &DVector<f64>,
    vel: &DVector<f64>,
    gains: &TaskGains,
) -> DVector<f64> {
    let mut cmd = acc_d.clone();
    for i in 0..cmd.len() {
        cmd[i] += gains.kd[i] * (vel_d[i] - vel[i]) + gains.kp[i] * (pos_d[i] - pos[i]);
    }
    cmd
}

/// Point reference (position, velocity, acceleration) for COM or foot
/// tracking tasks.
#[derive(Debug, Clone, Copy)]
pub struct PointReference {
    pub pos: Vector2<f64>,
    pub vel: Vector2<f64>,
    pub acc: Vector2<f64>,
}

fn dv2(v: Vector2<f64>) -> DVector<f64> {
    DVector::from_column_slice(&[v.x, v.y])
}

/// COM trajectory tracking task.
pub fn task_com(
    model: &RobotModel,
    state: &RobotState,
    reference: &PointReference,
    gains: &TaskGains,
    weight: &DVector<f64>,
) -> WbcTask {
    let (j, jdqd) = com_jacobian(model, state);
    let (p, v) = com_position_velocity(model, state);
    let cmd = commanded_acceleration(
        &dv2(reference.pos),
        &dv2(reference.vel),
        &dv2(reference.acc),
        &dv2(p),
        &dv2(v),
        gains,
    );
    WbcTask {
        kind: TaskKind::Com,
        jacobian: j,
        jdot_qdot: dv2(jdqd),
        xddot_cmd: cmd,
        weight: weight.clone(),
    }
}

/// Attitude rotation control task: drive `ḣ_r = A_r q̈ + Ȧ_r q̇` to zero.
pub fn task_angular_momentum(model: &RobotModel, state: &RobotState, weight: f64) -> WbcTask {
    let (a_r, adot_qdot) = centroidal_momentum_pitch(model, state);
    WbcTask {
        kind: TaskKind::AngularMomentum,
        jacobian: a_r,
        jdot_qdot: DVector::from_element(1, adot_qdot),
        xddot_cmd: DVector::zeros(1),
        weight: DVector::from_element(1, weight),
    }
}

/// Foot point trajectory tracking task (flight phase).
pub fn task_foot_tracking(
    model: &RobotModel,
    state: &RobotState,
    foot: usize,
    local: Vector2<f64>,
    reference: &PointReference,
    gains: &TaskGains,
    weight: &DVector<f64>,
) -> WbcTask {
    let kin = dynamics::kinematics(model, state);
    let p = kin.point_world(foot, local);
    let v = kin.point_velocity(foot, p);
    let (j, jdqd) = point_jacobian_world(model, &kin, foot, p);
    let cmd = commanded_acceleration(
        &dv2(reference.pos),
        &dv2(reference.vel),
        &dv2(reference.acc),
        &dv2(p),
        &dv2(v),
        gains,
    );
    WbcTask {
        kind: TaskKind::FootTracking,
        jacobian: j,
        jdot_qdot: dv2(jdqd),
        xddot_cmd: cmd,
        weight: weight.clone(),
    }
}

/// Foot level control task: drive the foot pitch toward zero (flight).
pub fn task_foot_level(
    model: &RobotModel,
    state: &RobotState,
    foot: usize,
    gains: &TaskGains,
    weight: f64,
) -> WbcTask {
    let (j, jdqd) = orientation_jacobian(model, foot);
    let kin = dynamics::kinematics(model, state);
    let angle = kin.angle[foot];
    let rate = (&j * &state.qdot)[0];
    let cmd = gains.kd[0] * (0.0 - rate) + gains.kp[0] * (0.0 - angle);
    WbcTask {
        kind: TaskKind::FootLevel,
        jacobian: j,
        jdot_qdot: DVector::from_element(1, jdqd),
        xddot_cmd: DVector::from_element(1, cmd),
        weight: DVector::from_element(1, weight),
    }
}

/// Torso level control task: drive the base pitch toward zero (landing).
pub fn task_torso_level(
    model: &RobotModel,
    state: &RobotState,
    gains: &TaskGains,
    weight: f64,
) -> WbcTask {
    let (j, jdqd) = orientation_jacobian(model, 0);
    let pitch = state.q[2];
    let rate = state.qdot[2];
    let cmd = gains.kd[0] * (0.0 - rate) + gains.kp[0] * (0.0 - pitch);
    WbcTask {
        kind: TaskKind::TorsoLevel,
        jacobian: j,
        jdot_qdot: DVector::from_element(1, jdqd),
        xddot_cmd: DVector::from_element(1, cmd),
        weight: DVector::from_element(1, weight),
    }
}

/// Joint-space position hold for the listed coordinates (arm locking).
pub fn task_joint_hold(
    model: &RobotModel,
    state: &RobotState,
    coords: &[usize],
    targets: &[f64],
    gains: &TaskGains,
    weight: f64,
) -> WbcTask {
    let n = model.nq();
    let rows = coords.len();
    let mut j = DMatrix::zeros(rows, n);
    let mut cmd = DVector::zeros(rows);
    for (k, (&c, &target)) in coords.iter().zip(targets.iter()).enumerate() {
        j[(k, c)] = 1.0;
        cmd[k] = gains.kd[k] * (0.0 - state.qdot[c]) + gains.kp[k] * (target - state.q[c]);
    }
    WbcTask {
        kind: TaskKind::JointHold,
        jacobian: j,
        jdot_qdot: DVector::zeros(rows),
        xddot_cmd: cmd,
        weight: DVector::from_element(rows, weight),
    }
}

/// Assembled QP over the stacked `(q̈, τ, F)` variables.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub nq: usize,
    pub n_act: usize,
    /// Number of contact points (two force variables each).
    pub n_contacts: usize,
}

impl QpProblem {
    pub fn num_vars(&self) -> usize {
        self.nq + self.n_act + 2 * self.n_contacts
    }
}

/// Solution with certificates.
#[derive(Debug, Clone)]
pub struct WbcSolution {
    pub qddot: DVector<f64>,
    pub tau: DVector<f64>,
    /// One planar force per contact point, in the contact-set order.
    pub forces: Vec<Vector2<f64>>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

fn allowed(kind: TaskKind, phase: Phase) -> bool {
    use TaskKind::*;
    if kind == JointHold {
        return true;
    }
    match phase {
        Phase::Jumping => matches!(kind, Com | AngularMomentum),
        Phase::Flight => matches!(kind, FootTracking | FootLevel),
        Phase::Landing | Phase::Static => matches!(kind, Com | TorsoLevel),
    }
}

/// Build the per-phase QP. `contacts` must be empty in flight; in contact
/// phases each point contributes a no-acceleration equality, a friction
/// cone and a unilateral row.
#[allow(clippy::too_many_arguments)]
pub fn assemble_qp(
    model: &RobotModel,
    state: &RobotState,
    tasks: &[WbcTask],
    phase: Phase,
    mu: f64,
    torque_limits: &DVector<f64>,
    contacts: &ContactSet,
    epsilon: f64,
) -> Result<QpProblem, WbcError> {
    for t in tasks {
        t.validate()?;
        if !allowed(t.kind, phase) {
            return Err(WbcError::PhaseTaskMismatch {
                task: t.kind,
                phase,
            });
        }
    }
    if phase == Phase::Flight && !contacts.is_empty() {
        return Err(WbcError::ContactInFlight(contacts.len()));
    }
    let nq = model.nq();
    let n_act = model.n_actuated();
    if torque_limits.len() != n_act {
        return Err(WbcError::Dims(format!(
            "torque limits {} vs {} actuated",
            torque_limits.len(),
            n_act
        )));
    }
    let nc = contacts.len();
    let nv = nq + n_act + 2 * nc;

    // Cost: task rows live on the q̈ block only.
    let mut h = DMatrix::zeros(nv, nv);
    let mut g = DVector::zeros(nv);
    for t in tasks {
        // H_qq += Jᵀ W J; g_q += Jᵀ W (J̇q̇ − cmd)
        let rows = t.jacobian.nrows();
        for r in 0..rows {
            let w = t.weight[r];
            if w == 0.0 {
                continue;
            }
            let jrow = t.jacobian.row(r);
            for a in 0..nq {
                let ja = jrow[a];
                if ja == 0.0 {
                    continue;
                }
                g[a] += ja * w * (t.jdot_qdot[r] - t.xddot_cmd[r]);
                for b in 0..nq {
                    h[(a, b)] += ja * w * jrow[b];
                }
            }
        }
    }
    for i in 0..nv {
        h[(i, i)] += epsilon;
    }

    // Equalities: dynamics, then contact no-acceleration rows.
    let m = mass_matrix(model, state);
    let bias = bias_forces(model, state);
    let s_a = actuation_matrix(model);
    let kin = dynamics::kinematics(model, state);

    let n_eq = nq + 2 * nc;
    let mut a_eq = DMatrix::zeros(n_eq, nv);
    let mut b_eq = DVector::zeros(n_eq);
    a_eq.view_mut((0, 0), (nq, nq)).copy_from(&m);
    a_eq.view_mut((0, nq), (nq, n_act))
        .copy_from(&(-s_a.transpose()));
    for (k, cp) in contacts.points.iter().enumerate() {
        let (jc, jdqd) = point_jacobian_world(model, &kin, cp.body, cp.world);
        a_eq.view_mut((0, nq + n_act + 2 * k), (nq, 2))
            .copy_from(&(-jc.transpose()));
        a_eq.view_mut((nq + 2 * k, 0), (2, nq)).copy_from(&jc);
        b_eq[nq + 2 * k] = -jdqd.x;
        b_eq[nq + 2 * k + 1] = -jdqd.y;
    }
    for i in 0..nq {
        b_eq[i] = -bias[i];
    }

    // Inequalities: friction cone + unilateral per point, torque box.
    let n_in = 3 * nc + 2 * n_act;
    let mut a_in = DMatrix::zeros(n_in, nv);
    let mut b_in = DVector::zeros(n_in);
    for k in 0..nc {
        let fx = nq + n_act + 2 * k;
        let fz = fx + 1;
        a_in[(3 * k, fx)] = 1.0;
        a_in[(3 * k, fz)] = -mu;
        a_in[(3 * k + 1, fx)] = -1.0;
        a_in[(3 * k + 1, fz)] = -mu;
        a_in[(3 * k + 2, fz)] = -1.0;
    }
    for j in 0..n_act {
        a_in[(3 * nc + 2 * j, nq + j)] = 1.0;
        b_in[3 * nc + 2 * j] = torque_limits[j];
        a_in[(3 * nc + 2 * j + 1, nq + j)] = -1.0;
        b_in[3 * nc + 2 * j + 1] = torque_limits[j];
    }

    Ok(QpProblem {
        h,
        g,
        a_eq,
        b_eq,
        a_in,
        b_in,
        nq,
        n_act,
        n_contacts: nc,
    })
}

/// Solve an assembled whole-body QP.
pub fn solve_qp(problem: &QpProblem) -> Result<WbcSolution, WbcError> {
    let sol = qp::solve(&QpProblemData {
        h: &problem.h,
        g: &problem.g,
        a_eq: &problem.a_eq,
        b_eq: &problem.b_eq,
        a_in: &problem.a_in,
        b_in: &problem.b_in,
    })?;
    let nq = problem.nq;
    let n_act = problem.n_act;
    let forces = (0..problem.n_contacts)
        .map(|k| {
            Vector2::new(
                sol.x[nq + n_act + 2 * k],
                sol.x[nq + n_act + 2 * k + 1],
            )
        })
        .collect();
    Ok(WbcSolution {
        qddot: sol.x.rows(0, nq).into_owned(),
        tau: sol.x.rows(nq, n_act).into_owned(),
        forces,
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
    })
}
