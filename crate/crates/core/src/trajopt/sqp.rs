//! Sequential quadratic programming for the transcribed phase problems.
//!
//! Each iteration linearizes the constraints, builds a strictly convex QP
//! on a damped-BFGS approximation of the Lagrangian Hessian (seeded with
//! the exact cost Hessian), and globalizes with a backtracking line search
//! on an L1 merit function. Converged means: max constraint violation and
//! first-order optimality both within tolerance.

use crate::qp::{self, PivotedQr, QpError, QpProblemData};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// A smooth NLP with explicit evaluators:
/// minimize `cost(x)` subject to `eq(x) = 0`, `ineq(x) ≤ 0`.
pub trait Nlp {
    fn num_vars(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn num_ineq(&self) -> usize;
    fn cost(&self, x: &DVector<f64>) -> f64;
    fn cost_grad(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Exact or Gauss–Newton cost Hessian; seeds the BFGS approximation.
    fn cost_hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn eq_constraints(&self, x: &DVector<f64>) -> DVector<f64>;
    fn eq_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn ineq_constraints(&self, x: &DVector<f64>) -> DVector<f64>;
    fn ineq_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Error)]
pub enum NlpError {
    #[error("guess has length {got}, problem has {want} variables")]
    BadGuess { got: usize, want: usize },
    #[error("NaN from problem evaluators at iteration {0}")]
    Nan(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct SqpOptions {
    /// Feasibility tolerance (max constraint violation).
    pub feas_tol: f64,
    /// First-order optimality tolerance.
    pub opt_tol: f64,
    pub max_iter: usize,
    /// Tikhonov term added to every QP subproblem Hessian.
    pub regularization: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            opt_tol: 1e-6,
            max_iter: 120,
            regularization: 1e-8,
        }
    }
}

impl SqpOptions {
    /// Single-tolerance form: both feasibility and optimality at `tol`.
    pub fn with_tol(tol: f64, max_iter: usize) -> Self {
        Self {
            feas_tol: tol,
            opt_tol: tol,
            max_iter,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SqpReport {
    pub converged: bool,
    pub iterations: usize,
    pub cost: f64,
    pub max_violation: f64,
    pub first_order_opt: f64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SqpResult {
    /// Best iterate (the solution when `report.converged`).
    pub x: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    pub report: SqpReport,
}

struct Eval {
    f: f64,
    g: DVector<f64>,
    ce: DVector<f64>,
    je: DMatrix<f64>,
    ci: DVector<f64>,
    ji: DMatrix<f64>,
}

fn evaluate(nlp: &dyn Nlp, x: &DVector<f64>, iter: usize) -> Result<Eval, NlpError> {
    let e = Eval {
        f: nlp.cost(x),
        g: nlp.cost_grad(x),
        ce: nlp.eq_constraints(x),
        je: nlp.eq_jacobian(x),
        ci: nlp.ineq_constraints(x),
        ji: nlp.ineq_jacobian(x),
    };
    let nan = !e.f.is_finite()
        || e.g.iter().any(|v| !v.is_finite())
        || e.ce.iter().any(|v| !v.is_finite())
        || e.je.iter().any(|v| !v.is_finite())
        || e.ci.iter().any(|v| !v.is_finite())
        || e.ji.iter().any(|v| !v.is_finite());
    if nan {
        return Err(NlpError::Nan(iter));
    }
    Ok(e)
}

fn violation(ce: &DVector<f64>, ci: &DVector<f64>) -> f64 {
    let eq = if ce.is_empty() { 0.0 } else { ce.amax() };
    let ineq = ci.iter().cloned().fold(0.0f64, f64::max);
    eq.max(ineq)
}

fn violation_l1(ce: &DVector<f64>, ci: &DVector<f64>) -> f64 {
    ce.iter().map(|v| v.abs()).sum::<f64>() + ci.iter().map(|v| v.max(0.0)).sum::<f64>()
}

/// Solve the NLP by SQP from `guess`. The single-`tol` entry point of
/// [`SqpOptions::with_tol`] matches the operation contract; richer options
/// are available for callers that need asymmetric tolerances.
pub fn solve_nlp(
    nlp: &dyn Nlp,
    guess: &DVector<f64>,
    opts: &SqpOptions,
) -> Result<SqpResult, NlpError> {
    let n = nlp.num_vars();
    if guess.len() != n {
        return Err(NlpError::BadGuess {
            got: guess.len(),
            want: n,
        });
    }

    let mut x = guess.clone();
    let mut eval = evaluate(nlp, &x, 0)?;

    // Converged at the guess? Gauge optimality with least-squares
    // multipliers over the equality rows and near-active inequalities.
    let feas0 = violation(&eval.ce, &eval.ci);
    if feas0 <= opts.feas_tol {
        let (opt0, lam, mu) = ls_multiplier_optimality(&eval, opts.feas_tol);
        if opt0 <= opts.opt_tol {
            return Ok(SqpResult {
                x,
                eq_multipliers: lam,
                ineq_multipliers: mu,
                report: SqpReport {
                    converged: true,
                    iterations: 0,
                    cost: eval.f,
                    max_violation: feas0,
                    first_order_opt: opt0,
                    message: "stationary at initial guess".into(),
                },
            });
        }
    }

    let mut hess = nlp.cost_hessian(&x);
    for i in 0..n {
        hess[(i, i)] += 1e-4;
    }

    let mut penalty: f64 = 10.0;
    let mut lambda = DVector::zeros(nlp.num_eq());
    let mut mu = DVector::zeros(nlp.num_ineq());
    let mut resets = 0usize;
    let mut message = String::from("max iterations exceeded");
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=opts.max_iter {
        iterations = iter;

        // QP subproblem, with feasibility relaxation fallback.
        let mut h_qp = hess.clone();
        for i in 0..n {
            h_qp[(i, i)] += opts.regularization;
        }
        let mut sub = None;
        let mut last_err = String::new();
        for kappa in [1.0, 0.8, 0.5, 0.2, 0.05] {
            let be: DVector<f64> = eval.ce.map(|v| -kappa * v);
            let bi: DVector<f64> = eval.ci.map(|v| if v > 0.0 { -kappa * v } else { -v });
            match qp::solve(&QpProblemData {
                h: &h_qp,
                g: &eval.g,
                a_eq: &eval.je,
                b_eq: &be,
                a_in: &eval.ji,
                b_in: &bi,
            }) {
                Ok(s) => {
                    sub = Some(s);
                    break;
                }
                Err(QpError::NanInput) => return Err(NlpError::Nan(iter)),
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            }
        }
        let Some(sub) = sub else {
            // A numerically degenerate BFGS matrix shows up as a NotPD
            // reduced Hessian; reseed the curvature and retry.
            if last_err.contains("positive definite") && resets < 3 {
                hess = nlp.cost_hessian(&x);
                for i in 0..n {
                    hess[(i, i)] += 1e-4;
                }
                resets += 1;
                continue;
            }
            message = format!("QP subproblem failed at every relaxation ({last_err})");
            break;
        };
        let p = sub.x;
        lambda = sub.eq_multipliers;
        mu = sub.ineq_multipliers;

        // Stationarity of the Lagrangian at the current point with the QP
        // multipliers; equals ‖H_qp·p‖ by the QP optimality conditions.
        let grad_lag = &eval.g
            + eval.je.transpose() * &lambda
            + eval.ji.transpose() * &mu;
        let opt = grad_lag.amax();
        let feas = violation(&eval.ce, &eval.ci);
        log::debug!(
            "sqp iter {iter}: feas {feas:.3e} opt {opt:.3e} cost {:.6} penalty {penalty:.1e}",
            eval.f
        );
        if feas <= opts.feas_tol && opt <= opts.opt_tol {
            converged = true;
            message = "converged".into();
            break;
        }
        // Optimal and nearly feasible: the terminal Newton polish closes
        // the feasibility gap far faster than further SQP steps would.
        if opt <= opts.opt_tol && feas <= opts.feas_tol.max(1e-7) {
            message = "optimality reached; handing off to feasibility polish".into();
            break;
        }

        // L1 merit line search.
        let mult_inf = lambda.amax().max(mu.amax());
        penalty = penalty.max(1.1 * mult_inf + 1.0);
        let phi0 = eval.f + penalty * violation_l1(&eval.ce, &eval.ci);
        let descent = eval.g.dot(&p) - penalty * violation_l1(&eval.ce, &eval.ci);

        let merit = |x_trial: &DVector<f64>| -> Result<(f64, f64), NlpError> {
            let f_t = nlp.cost(x_trial);
            let ce_t = nlp.eq_constraints(x_trial);
            let ci_t = nlp.ineq_constraints(x_trial);
            if !f_t.is_finite()
                || ce_t.iter().any(|v| !v.is_finite())
                || ci_t.iter().any(|v| !v.is_finite())
            {
                return Err(NlpError::Nan(iter));
            }
            Ok((
                f_t + penalty * violation_l1(&ce_t, &ci_t),
                violation(&ce_t, &ci_t),
            ))
        };

        let mut alpha = 1.0f64;
        let mut accepted = None;
        let mut tried_soc = false;
        while alpha >= 1e-12 {
            let x_trial = &x + alpha * &p;
            let (phi_t, _) = merit(&x_trial)?;
            if phi_t <= phi0 + 0.1 * alpha * descent.min(0.0) || phi_t < phi0 - 1e-16 {
                accepted = Some(x_trial);
                break;
            }
            // Second-order correction at the full step: re-evaluate the
            // equalities and violated inequalities at x+p and remove their
            // curvature-induced bump with a least-norm correction
            // (counters the Maratos effect).
            if alpha == 1.0 && !tried_soc {
                tried_soc = true;
                let ce_full = nlp.eq_constraints(&x_trial);
                let ci_full = nlp.ineq_constraints(&x_trial);
                let viol_rows: Vec<usize> =
                    (0..ci_full.len()).filter(|&i| ci_full[i] > 0.0).collect();
                let rows = ce_full.len() + viol_rows.len();
                if rows > 0
                    && ce_full.iter().all(|v| v.is_finite())
                    && ci_full.iter().all(|v| v.is_finite())
                {
                    let mut jac = DMatrix::zeros(rows, n);
                    let mut rhs = DVector::zeros(rows);
                    jac.view_mut((0, 0), (ce_full.len(), n)).copy_from(&eval.je);
                    for i in 0..ce_full.len() {
                        rhs[i] = -ce_full[i];
                    }
                    for (k, &i) in viol_rows.iter().enumerate() {
                        jac.row_mut(ce_full.len() + k).copy_from(&eval.ji.row(i));
                        rhs[ce_full.len() + k] = -ci_full[i];
                    }
                    let qr = PivotedQr::new(&jac.transpose());
                    let (dp, _) = qr.min_norm_solution(&rhs);
                    let x_soc = &x_trial + dp;
                    let (phi_soc, _) = merit(&x_soc)?;
                    if phi_soc <= phi0 + 0.1 * descent.min(0.0) || phi_soc < phi0 - 1e-16 {
                        accepted = Some(x_soc);
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }

        let Some(x_new) = accepted else {
            // Stalled. Feasible and nearly stationary counts as done;
            // otherwise reset the curvature and retry a couple of times.
            if feas <= opts.feas_tol && opt <= 10.0 * opts.opt_tol {
                converged = true;
                message = format!("converged (stationarity stalled at {opt:.2e})");
                break;
            }
            if resets < 3 {
                hess = nlp.cost_hessian(&x);
                for i in 0..n {
                    hess[(i, i)] += 1e-4;
                }
                resets += 1;
                continue;
            }
            message = "line search failed".into();
            break;
        };

        let eval_new = evaluate(nlp, &x_new, iter)?;

        // Damped BFGS on the Lagrangian.
        let s = &x_new - &x;
        let grad_lag_new = &eval_new.g
            + eval_new.je.transpose() * &lambda
            + eval_new.ji.transpose() * &mu;
        let y = &grad_lag_new - &grad_lag;
        let sty = s.dot(&y);
        let bs = &hess * &s;
        let stbs = s.dot(&bs);
        if stbs > 1e-16 {
            let theta = if sty < 0.2 * stbs {
                0.8 * stbs / (stbs - sty)
            } else {
                1.0
            };
            let y_damped = theta * &y + (1.0 - theta) * &bs;
            let sty_d = s.dot(&y_damped);
            if sty_d > 1e-12 * stbs {
                hess += &y_damped * y_damped.transpose() / sty_d - &bs * bs.transpose() / stbs;
            }
        }

        x = x_new;
        eval = eval_new;
    }

    // Feasibility polish: the main loop may stop (stalls, active-set
    // chatter at degenerate corners) with small but not tiny violations;
    // a few Newton steps on the violated constraints converge to the
    // feasible manifold without disturbing the cost meaningfully. The
    // steps are deliberately non-monotone — satisfying the worst rows can
    // nudge other near-active rows out briefly — so the best iterate over
    // the sweep is kept.
    let feas_start = violation(&eval.ce, &eval.ci);
    if feas_start > 0.1 * opts.feas_tol && (!eval.ce.is_empty() || !eval.ci.is_empty()) {
        let mut best_x = x.clone();
        let mut best_feas = feas_start;
        let mut cur_x = x.clone();
        let mut cur = evaluate(nlp, &cur_x, iterations)?;
        for _ in 0..8 {
            let feas_cur = violation(&cur.ce, &cur.ci);
            if feas_cur <= 0.1 * opts.feas_tol || feas_cur > 1e3 * feas_start.max(1e-12) {
                break;
            }
            let viol_rows: Vec<usize> =
                (0..cur.ci.len()).filter(|&i| cur.ci[i] > 0.0).collect();
            let rows = cur.ce.len() + viol_rows.len();
            if rows == 0 {
                break;
            }
            let mut jac = DMatrix::zeros(rows, n);
            let mut rhs = DVector::zeros(rows);
            jac.view_mut((0, 0), (cur.ce.len(), n)).copy_from(&cur.je);
            for i in 0..cur.ce.len() {
                rhs[i] = -cur.ce[i];
            }
            for (k, &i) in viol_rows.iter().enumerate() {
                jac.row_mut(cur.ce.len() + k).copy_from(&cur.ji.row(i));
                rhs[cur.ce.len() + k] = -cur.ci[i];
            }
            let qr = PivotedQr::new(&jac.transpose());
            let (dp, _) = qr.min_norm_solution(&rhs);
            if dp.iter().any(|v| !v.is_finite()) {
                break;
            }
            cur_x += dp;
            cur = evaluate(nlp, &cur_x, iterations)?;
            let feas_new = violation(&cur.ce, &cur.ci);
            if feas_new < best_feas {
                best_feas = feas_new;
                best_x.copy_from(&cur_x);
            }
        }
        if best_feas < feas_start {
            x = best_x;
            eval = evaluate(nlp, &x, iterations)?;
        }
    }
    let feas = violation(&eval.ce, &eval.ci);

    let opt = if converged {
        (&eval.g + eval.je.transpose() * &lambda + eval.ji.transpose() * &mu).amax()
    } else {
        ls_multiplier_optimality(&eval, opts.feas_tol).0
    };
    if !converged && feas <= opts.feas_tol && opt <= opts.opt_tol {
        converged = true;
        message = format!("{message}; feasibility polish converged");
    }
    Ok(SqpResult {
        x,
        eq_multipliers: lambda,
        ineq_multipliers: mu,
        report: SqpReport {
            converged,
            iterations,
            cost: eval.f,
            max_violation: feas,
            first_order_opt: opt,
            message,
        },
    })
}

/// Least-squares multipliers over the equalities and near-active
/// inequalities. Inequality rows whose fitted multiplier comes out
/// negative are dropped and the fit repeated (sign-constrained active-set
/// refinement), so the returned stationarity residual is meaningful.
fn ls_multiplier_optimality(eval: &Eval, act_tol: f64) -> (f64, DVector<f64>, DVector<f64>) {
    let n = eval.g.len();
    let me = eval.je.nrows();
    let mut active: Vec<usize> = (0..eval.ci.len())
        .filter(|&i| eval.ci[i] >= -act_tol.max(1e-8))
        .collect();
    let mut lam = DVector::zeros(me);
    let mut mu = DVector::zeros(eval.ci.len());
    for _pass in 0..6 {
        let rows = me + active.len();
        if rows == 0 {
            return (eval.g.amax(), lam, mu);
        }
        let mut a = DMatrix::zeros(rows, n);
        a.view_mut((0, 0), (me, n)).copy_from(&eval.je);
        for (k, &i) in active.iter().enumerate() {
            a.row_mut(me + k).copy_from(&eval.ji.row(i));
        }
        let qr = PivotedQr::new(&a.transpose());
        let y = qr.least_squares_transposed(&(-&eval.g));
        let negatives: Vec<usize> = (0..active.len())
            .filter(|&k| y[me + k] < -1e-12)
            .collect();
        if negatives.is_empty() || _pass == 5 {
            for i in 0..me {
                lam[i] = y[i];
            }
            mu.fill(0.0);
            for (k, &i) in active.iter().enumerate() {
                mu[i] = y[me + k].max(0.0);
            }
            break;
        }
        for &k in negatives.iter().rev() {
            active.remove(k);
        }
    }
    let residual = (&eval.g + eval.je.transpose() * &lam + eval.ji.transpose() * &mu).amax();
    (residual, lam, mu)
}
