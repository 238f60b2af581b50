//! Scratch probe for the phase planners: solves the bundled-scale jumping
//! and landing problems and prints solver behavior.

use fslip_core::fslip::{FslipParams, FslipState};
use fslip_core::trajopt::sqp::{solve_nlp, SqpOptions};
use fslip_core::trajopt::{
    check_trajectory, virtual_energy_cost, ArmLimits, JumpGoal, LandingGoal, TranscribedProblem,
    TranscriptionGrid, VIOLATION_FAMILIES,
};

fn main() {
    let params = FslipParams::new(40.0, 0.5, 5000.0, 0.8, 9.81).unwrap();
    let arms = ArmLimits::new(-20.0, 20.0, -120.0, 120.0).unwrap();
    let mu = 0.6;

    let h = 0.15;
    let d = 0.1;
    let zdot_d = (2.0 * params.g * h).sqrt();
    let t_flight = 2.0 * zdot_d / params.g;
    let xdot_d = d / t_flight;
    println!("goal: xdot_d = {xdot_d:.4}, zdot_d = {zdot_d:.4}");

    let start = FslipState::equilibrium(&params);
    let grid = TranscriptionGrid::with_duration(40, 0.4).unwrap();
    let problem = TranscribedProblem::jumping(
        params,
        JumpGoal::new(xdot_d, zdot_d).unwrap(),
        arms,
        mu,
        grid,
        start,
    )
    .unwrap();

    let t0 = std::time::Instant::now();
    let result = solve_nlp(
        &problem,
        &problem.initial_guess(),
        &SqpOptions {
            feas_tol: 1e-9,
            opt_tol: 1e-2,
            max_iter: 200,
            regularization: 1e-8,
        },
    )
    .unwrap();
    println!(
        "jumping: {:?} in {:.2?} ({} iters), cost {:.4}, viol {:.3e}, opt {:.3e}",
        result.report.converged,
        t0.elapsed(),
        result.report.iterations,
        result.report.cost,
        result.report.max_violation,
        result.report.first_order_opt,
    );
    println!("  message: {}", result.report.message);
    let traj = problem.extract(&result.x);
    let check = check_trajectory(&traj, &problem);
    for (name, v) in VIOLATION_FAMILIES.iter().zip(check.values()) {
        println!("  {name:>10}: {v:.3e}");
    }
    println!("  virtual energy: {:.3}", virtual_energy_cost(&traj, 1.0, 1.0));
    let last = traj.terminal();
    println!(
        "  takeoff state: x={:.3} z={:.3} xd={:.3} zd={:.3} r={:.3} beta={:.3} th_d={:.3} theta={:.3}",
        last.state.x,
        last.state.z,
        last.state.xdot,
        last.state.zdot,
        last.state.r,
        last.state.beta,
        last.state.thetadot,
        last.state.theta,
    );
    for (i, k) in traj.knots.iter().enumerate().step_by(6) {
        println!(
            "  k{:02} t={:.3} z={:.3} zd={:+.2} r={:.3} fz={:7.1} fx={:+6.1} tau={:+7.2} thd={:+6.2}",
            i, k.t, k.state.z, k.state.zdot, k.state.r, k.fz, k.fx, k.control.tau, k.state.thetadot
        );
    }

    // Landing from a representative touchdown state.
    let beta_td: f64 = 0.1;
    let r_td = 0.8;
    let touchdown = FslipState {
        x: r_td * beta_td.sin(),
        z: r_td * beta_td.cos(),
        xdot: xdot_d,
        zdot: -zdot_d,
        r: r_td,
        beta: beta_td,
        rdot: -zdot_d * beta_td.cos() + xdot_d * beta_td.sin(),
        betadot: (xdot_d * beta_td.cos() + zdot_d * beta_td.sin()) / r_td,
        theta: 0.3,
        thetadot: 2.0,
    };
    let landing_goal = LandingGoal::new(params.equilibrium_leg_length(), &params).unwrap();
    let grid_l = TranscriptionGrid::with_duration(40, 1.0).unwrap();
    let problem_l =
        TranscribedProblem::landing(params, touchdown, landing_goal, arms, mu, grid_l).unwrap();
    let t0 = std::time::Instant::now();
    let result_l = solve_nlp(
        &problem_l,
        &problem_l.initial_guess(),
        &SqpOptions {
            feas_tol: 1e-9,
            opt_tol: 1e-2,
            max_iter: 200,
            regularization: 1e-8,
        },
    )
    .unwrap();
    println!(
        "landing: {:?} in {:.2?} ({} iters), cost {:.4}, viol {:.3e}, opt {:.3e} [{}]",
        result_l.report.converged,
        t0.elapsed(),
        result_l.report.iterations,
        result_l.report.cost,
        result_l.report.max_violation,
        result_l.report.first_order_opt,
        result_l.report.message,
    );
    let traj_l = problem_l.extract(&result_l.x);
    let check_l = check_trajectory(&traj_l, &problem_l);
    for (name, v) in VIOLATION_FAMILIES.iter().zip(check_l.values()) {
        println!("  {name:>10}: {v:.3e}");
    }
    let last = traj_l.terminal();
    println!(
        "  final: x={:.4} z={:.4} xd={:.4} zd={:.4} r={:.4} Fs={:.3} mg={:.3}",
        last.state.x,
        last.state.z,
        last.state.xdot,
        last.state.zdot,
        last.state.r,
        params.k * (params.r0 - last.state.r),
        params.m * params.g,
    );
}
