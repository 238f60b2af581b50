//! Scratch probe for the first SQP subproblem of the jumping plan.

use fslip_core::fslip::{FslipParams, FslipState};
use fslip_core::qp::{self, PivotedQr, QpProblemData};
use fslip_core::trajopt::sqp::Nlp;
use fslip_core::trajopt::{ArmLimits, JumpGoal, TranscribedProblem, TranscriptionGrid};
use nalgebra::{DMatrix, DVector};

fn main() {
    let params = FslipParams::new(40.0, 0.5, 5000.0, 0.8, 9.81).unwrap();
    let arms = ArmLimits::new(-20.0, 20.0, -120.0, 120.0).unwrap();
    let start = FslipState::equilibrium(&params);
    let grid = TranscriptionGrid::with_duration(40, 0.4).unwrap();
    let problem = TranscribedProblem::jumping(
        params,
        JumpGoal::new(0.2859, 1.7155).unwrap(),
        arms,
        0.6,
        grid,
        start,
    )
    .unwrap();

    let x = problem.initial_guess();
    let g = problem.cost_grad(&x);
    let ce = problem.eq_constraints(&x);
    let je = problem.eq_jacobian(&x);
    let ci = problem.ineq_constraints(&x);
    let ji = problem.ineq_jacobian(&x);
    let mut h = problem.cost_hessian(&x);
    for i in 0..h.nrows() {
        h[(i, i)] += 1e-4 + 1e-8;
    }

    println!(
        "n = {}, me = {}, mi = {}",
        problem.num_vars(),
        je.nrows(),
        ji.nrows()
    );
    println!("‖ce‖∞ = {:.3e}, max ci = {:.3e}", ce.amax(),
        ci.iter().cloned().fold(f64::NEG_INFINITY, f64::max));

    // Equality system diagnostics.
    let t0 = std::time::Instant::now();
    let qr = PivotedQr::new(&je.transpose());
    println!("QR of Jeᵀ in {:.2?}, rank = {} / {}", t0.elapsed(), qr.rank(), je.nrows());
    let be: DVector<f64> = ce.map(|v| -v);
    let (x0, res) = qr.min_norm_solution(&be);
    println!("min-norm solution: ‖x0‖∞ = {:.3e}, residual = {:.3e}", x0.amax(), res);
    println!("check ‖Je·x0 − be‖∞ = {:.3e}", (&je * &x0 - &be).amax());
    let z = qr.null_space();
    println!("null space: {} cols, ‖Jeᵀ·Z‖... ‖Je·Z‖∞ = {:.3e}", z.ncols(), (&je * &z).amax());

    let bi: DVector<f64> = ci.map(|v| if v > 0.0 { 0.0 } else { -v });
    let t0 = std::time::Instant::now();
    match qp::solve(&QpProblemData {
        h: &h,
        g: &g,
        a_eq: &je,
        b_eq: &be,
        a_in: &ji,
        b_in: &bi,
    }) {
        Ok(sol) => println!(
            "QP ok in {:.2?}: kkt = {:.3e}, active = {}, iters = {}",
            t0.elapsed(),
            sol.kkt_residual,
            sol.active_set.len(),
            sol.iterations
        ),
        Err(e) => println!("QP failed in {:.2?}: {e}", t0.elapsed()),
    }

    // FD check of the equality Jacobian at the guess on a few columns.
    let mut worst = 0.0f64;
    let hh = 1e-7;
    for col in (0..problem.num_vars()).step_by(37) {
        let mut xp = x.clone();
        xp[col] += hh;
        let mut xm = x.clone();
        xm[col] -= hh;
        let fd = (problem.eq_constraints(&xp) - problem.eq_constraints(&xm)) / (2.0 * hh);
        let analytic = je.column(col);
        worst = worst.max((fd - analytic).amax());
    }
    println!("eq jacobian FD spot check worst diff: {worst:.3e}");

    let _ = DMatrix::<f64>::zeros(1, 1);
}
