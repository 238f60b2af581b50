//! Debug: evaluate polish behavior on the jumping problem solution.
use fslip_core::fslip::{FslipParams, FslipState};
use fslip_core::qp::PivotedQr;
use fslip_core::trajopt::sqp::{solve_nlp, Nlp, SqpOptions};
use fslip_core::trajopt::{ArmLimits, JumpGoal, TranscribedProblem, TranscriptionGrid};
use nalgebra::{DMatrix, DVector};

fn main() {
    let params = FslipParams::new(40.0, 0.5, 5000.0, 0.8, 9.81).unwrap();
    let arms = ArmLimits::new(-20.0, 20.0, -120.0, 120.0).unwrap();
    let start = FslipState::equilibrium(&params);
    let grid = TranscriptionGrid::with_duration(40, 0.4).unwrap();
    let zdot_d = (2.0 * params.g * 0.15f64).sqrt();
    let xdot_d = 0.1 / (2.0 * zdot_d / params.g);
    let problem = TranscribedProblem::jumping(
        params, JumpGoal::new(xdot_d, zdot_d).unwrap(), arms, 0.6, grid, start,
    ).unwrap();

    let result = solve_nlp(&problem, &problem.initial_guess(),
        &SqpOptions { feas_tol: 1e-9, opt_tol: 1e-2, max_iter: 200, regularization: 1e-8 }).unwrap();
    println!("after sqp: viol {:.3e}", result.report.max_violation);

    let mut x = result.x.clone();
    for it in 0..8 {
        let ce = problem.eq_constraints(&x);
        let ci = problem.ineq_constraints(&x);
        let viol_rows: Vec<usize> = (0..ci.len()).filter(|&i| ci[i] > 0.0).collect();
        let n = x.len();
        let rows = ce.len() + viol_rows.len();
        let mut jac = DMatrix::zeros(rows, n);
        let mut rhs = DVector::zeros(rows);
        let je = problem.eq_jacobian(&x);
        let ji = problem.ineq_jacobian(&x);
        jac.view_mut((0, 0), (ce.len(), n)).copy_from(&je);
        for i in 0..ce.len() { rhs[i] = -ce[i]; }
        for (k, &i) in viol_rows.iter().enumerate() {
            jac.row_mut(ce.len() + k).copy_from(&ji.row(i));
            rhs[ce.len() + k] = -ci[i];
        }
        // which rows are the worst?
        let mut worst_row = 0; let mut worst = 0.0;
        for i in 0..rhs.len() { if rhs[i].abs() > worst { worst = rhs[i].abs(); worst_row = i; } }
        let qr = PivotedQr::new(&jac.transpose());
        let (dp, lsres) = qr.min_norm_solution(&rhs);
        println!("polish {it}: viol {:.3e} (row {worst_row}, {} ineq viol), rank {}/{}, ls residual {:.3e}, |dp| {:.3e}",
            worst, viol_rows.len(), qr.rank(), rows, lsres, dp.amax());
        x += dp;
    }
}
