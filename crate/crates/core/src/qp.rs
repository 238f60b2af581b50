//! Dense strictly-convex quadratic programming.
//!
//! Solves
//!
//! ```text
//!     minimize    ½ xᵀH x + gᵀx
//!     subject to  A_eq x  = b_eq
//!                 A_in x ≤ b_in
//! ```
//!
//! with H symmetric positive definite. Equalities are eliminated exactly
//! through a rank-revealing QR null-space reduction; the reduced problem is
//! solved with a dual active-set iteration (Goldfarb–Idnani style). After
//! the active set settles, the solution is polished by one direct solve of
//! the active KKT system, so well-conditioned problems come back with KKT
//! residuals near machine precision. Fully deterministic: identical inputs
//! produce identical outputs.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dims(String),
    #[error("Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("problem is primal infeasible (max violation {max_violation:.3e})")]
    Infeasible { max_violation: f64 },
    #[error("active-set iteration cap {cap} exceeded")]
    IterationCap { cap: usize },
    #[error("NaN encountered in problem data")]
    NanInput,
}

/// Solver result with certificates.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    /// Indices of inequality constraints active at the solution.
    pub active_set: Vec<usize>,
    /// Max over stationarity, primal feasibility, dual feasibility and
    /// complementarity residuals.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Inequality-violation tolerance used to decide activity.
const FEAS_TOL: f64 = 1e-10;
/// Rank tolerance for the equality QR, relative to the largest pivot.
const RANK_TOL: f64 = 1e-12;

pub struct QpProblemData<'a> {
    pub h: &'a DMatrix<f64>,
    pub g: &'a DVector<f64>,
    pub a_eq: &'a DMatrix<f64>,
    pub b_eq: &'a DVector<f64>,
    pub a_in: &'a DMatrix<f64>,
    pub b_in: &'a DVector<f64>,
}

pub fn solve(p: &QpProblemData<'_>) -> Result<QpSolution, QpError> {
    solve_with_cap(p, 50 + 10 * (p.a_in.nrows() + p.h.nrows()))
}

pub fn solve_with_cap(p: &QpProblemData<'_>, cap: usize) -> Result<QpSolution, QpError> {
    let n = p.h.nrows();
    if p.h.ncols() != n || p.g.len() != n {
        return Err(QpError::Dims(format!(
            "H is {}x{}, g has {}",
            p.h.nrows(),
            p.h.ncols(),
            p.g.len()
        )));
    }
    if p.a_eq.nrows() != p.b_eq.len() || (p.a_eq.nrows() > 0 && p.a_eq.ncols() != n) {
        return Err(QpError::Dims("equality block".into()));
    }
    if p.a_in.nrows() != p.b_in.len() || (p.a_in.nrows() > 0 && p.a_in.ncols() != n) {
        return Err(QpError::Dims("inequality block".into()));
    }
    let has_nan = p.h.iter().any(|v| !v.is_finite())
        || p.g.iter().any(|v| !v.is_finite())
        || p.a_eq.iter().any(|v| !v.is_finite())
        || p.b_eq.iter().any(|v| !v.is_finite())
        || p.a_in.iter().any(|v| !v.is_finite())
        || p.b_in.iter().any(|v| !v.is_finite());
    if has_nan {
        return Err(QpError::NanInput);
    }

    // Null-space reduction of the equalities: x = x0 + Z v.
    let me = p.a_eq.nrows();
    let (x0, z) = if me > 0 {
        let qr = PivotedQr::new(&p.a_eq.transpose());
        let (x0, eq_residual) = qr.min_norm_solution(p.b_eq);
        if eq_residual > 1e-6 * (1.0 + p.b_eq.amax()) {
            return Err(QpError::Infeasible {
                max_violation: eq_residual,
            });
        }
        (x0, qr.null_space())
    } else {
        (DVector::zeros(n), DMatrix::identity(n, n))
    };

    let nv = z.ncols();
    let mi = p.a_in.nrows();

    // Reduced data.
    let hz = p.h * &z;
    let h_red = z.transpose() * &hz; // ZᵀHZ
    let g_red = z.transpose() * (p.h * &x0 + p.g);
    let c_red = p.a_in * &z; // mi × nv
    let d_red = p.b_in - p.a_in * &x0;

    let chol = nalgebra::Cholesky::new(h_red.clone()).ok_or(QpError::NotPositiveDefinite)?;

    // Dual active-set iteration on: min ½vᵀH_red v + g_redᵀ v, C v ≤ d.
    let mut v = chol.solve(&(-&g_red));
    let mut active: Vec<usize> = Vec::new();
    let mut mu_active: Vec<f64> = Vec::new();
    let mut iterations = 0usize;

    if nv == 0 {
        // Equalities determine x fully; just certify the inequalities.
        let slack = p.a_in * &x0 - p.b_in;
        let max_violation = slack.iter().cloned().fold(0.0f64, f64::max);
        if max_violation > 1e-8 {
            return Err(QpError::Infeasible { max_violation });
        }
        return finish(p, x0, &z, &DVector::zeros(0), &[], &[], 0);
    }

    loop {
        // Most violated inequality.
        let mut worst = FEAS_TOL;
        let mut pick: Option<usize> = None;
        for i in 0..mi {
            if active.contains(&i) {
                continue;
            }
            let s = c_red.row(i).dot(&v.transpose()) - d_red[i];
            let scale = 1.0 + d_red[i].abs();
            if s / scale > worst {
                worst = s / scale;
                pick = Some(i);
            }
        }
        let Some(pidx) = pick else {
            return finish(p, x0, &z, &v, &active, &mu_active, iterations);
        };

        // Try to add constraint `pidx`, dropping dual-blocking constraints
        // on the way.
        let n_p = c_red.row(pidx).transpose();
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(QpError::IterationCap { cap });
            }

            let hinvp = chol.solve(&n_p);
            let (step, dual_dir) = if active.is_empty() {
                (hinvp.clone(), DVector::zeros(0))
            } else {
                // N: active rows; r = (N H⁻¹ Nᵀ)⁻¹ N H⁻¹ n_p,
                // z_step = H⁻¹ n_p − H⁻¹ Nᵀ r.
                let na = active.len();
                let mut n_mat = DMatrix::zeros(na, nv);
                for (k, &ai) in active.iter().enumerate() {
                    n_mat.row_mut(k).copy_from(&c_red.row(ai));
                }
                let hinv_nt = chol.solve(&n_mat.transpose()); // nv × na
                let s_mat = &n_mat * &hinv_nt; // na × na
                let rhs = &n_mat * &hinvp;
                match nalgebra::LU::new(s_mat).solve(&rhs) {
                    Some(r) => (hinvp - &hinv_nt * &r, r),
                    // Degenerate active set. If the outstanding violation
                    // is numerical dust, settle for the current iterate.
                    None if worst <= 1e-7 => {
                        return finish(p, x0.clone(), &z, &v, &active, &mu_active, iterations)
                    }
                    None => {
                        return Err(QpError::Infeasible {
                            max_violation: worst,
                        })
                    }
                }
            };

            let curvature = n_p.dot(&step);
            let slack = n_p.dot(&v) - d_red[pidx];

            if curvature <= 1e-12 * n_p.norm_squared().max(1.0) {
                // No primal motion possible: take a pure dual step.
                let mut t_block = f64::INFINITY;
                let mut drop_k: Option<usize> = None;
                for (k, &rk) in dual_dir.iter().enumerate() {
                    if rk > 1e-14 && mu_active[k] / rk < t_block {
                        t_block = mu_active[k] / rk;
                        drop_k = Some(k);
                    }
                }
                match drop_k {
                    None if worst <= 1e-7 => {
                        return finish(p, x0.clone(), &z, &v, &active, &mu_active, iterations)
                    }
                    None => {
                        return Err(QpError::Infeasible {
                            max_violation: worst,
                        })
                    }
                    Some(k) => {
                        for (j, m) in mu_active.iter_mut().enumerate() {
                            *m -= t_block * dual_dir[j];
                        }
                        active.remove(k);
                        mu_active.remove(k);
                        continue;
                    }
                }
            }

            // Full primal step to the constraint surface vs. the first
            // active multiplier hitting zero.
            let t_full = slack / curvature;
            let mut t_block = f64::INFINITY;
            let mut drop_k: Option<usize> = None;
            for (k, &rk) in dual_dir.iter().enumerate() {
                if rk > 1e-14 && mu_active[k] / rk < t_block {
                    t_block = mu_active[k] / rk;
                    drop_k = Some(k);
                }
            }

            if t_full <= t_block {
                v -= t_full * &step;
                for (j, m) in mu_active.iter_mut().enumerate() {
                    *m -= t_full * dual_dir[j];
                }
                active.push(pidx);
                mu_active.push(t_full);
                break;
            } else {
                v -= t_block * &step;
                for (j, m) in mu_active.iter_mut().enumerate() {
                    *m -= t_block * dual_dir[j];
                }
                let k = drop_k.expect("finite blocking step implies a blocker");
                active.remove(k);
                mu_active.remove(k);
            }
        }
    }
}

/// Re-solve the KKT system of the final active set directly, recover
/// equality multipliers, and certify the result.
fn finish(
    p: &QpProblemData<'_>,
    x0: DVector<f64>,
    z: &DMatrix<f64>,
    v_hint: &DVector<f64>,
    active: &[usize],
    mu_hint: &[f64],
    iterations: usize,
) -> Result<QpSolution, QpError> {
    let n = p.h.nrows();
    let nv = z.ncols();
    let na = active.len();

    let (v, mu_act) = if nv == 0 {
        (DVector::zeros(0), vec![])
    } else {
        let h_red = z.transpose() * p.h * z;
        let g_red = z.transpose() * (p.h * &x0 + p.g);
        if na == 0 {
            let chol =
                nalgebra::Cholesky::new(h_red.clone()).ok_or(QpError::NotPositiveDefinite)?;
            (chol.solve(&(-&g_red)), vec![])
        } else {
            // [H_red Cᵀ; C 0][v; μ] = [−g_red; d].
            let mut kkt = DMatrix::zeros(nv + na, nv + na);
            kkt.view_mut((0, 0), (nv, nv)).copy_from(&h_red);
            let mut rhs = DVector::zeros(nv + na);
            for i in 0..nv {
                rhs[i] = -g_red[i];
            }
            for (k, &ai) in active.iter().enumerate() {
                let row = p.a_in.row(ai) * z;
                for j in 0..nv {
                    kkt[(nv + k, j)] = row[j];
                    kkt[(j, nv + k)] = row[j];
                }
                rhs[nv + k] = p.b_in[ai] - (p.a_in.row(ai) * &x0)[0];
            }
            match nalgebra::LU::new(kkt).solve(&rhs) {
                Some(sol) => (
                    sol.rows(0, nv).into_owned(),
                    sol.rows(nv, na).iter().cloned().collect(),
                ),
                // Degenerate active set: fall back to the iterate.
                None => (v_hint.clone(), mu_hint.to_vec()),
            }
        }
    };

    let x = &x0 + z * &v;

    let mut mu = DVector::zeros(p.a_in.nrows());
    for (k, &ai) in active.iter().enumerate() {
        mu[ai] = mu_act[k].max(0.0);
    }

    // Equality multipliers by least squares: A_eqᵀ λ = −(Hx + g + A_inᵀ μ).
    let grad_lag_partial = p.h * &x + p.g + p.a_in.transpose() * &mu;
    let lambda = if p.a_eq.nrows() > 0 {
        let qr = PivotedQr::new(&p.a_eq.transpose());
        qr.least_squares_transposed(&(-&grad_lag_partial))
    } else {
        DVector::zeros(0)
    };

    // KKT certificate.
    let stationarity = (&grad_lag_partial
        + if p.a_eq.nrows() > 0 {
            p.a_eq.transpose() * &lambda
        } else {
            DVector::zeros(n)
        })
    .amax();
    let primal_eq = if p.a_eq.nrows() > 0 {
        (p.a_eq * &x - p.b_eq).amax()
    } else {
        0.0
    };
    let slack = p.a_in * &x - p.b_in;
    let primal_in = slack.iter().cloned().fold(0.0f64, f64::max);
    let dual = mu.iter().cloned().fold(0.0f64, |a, m| a.max(-m));
    let compl = slack
        .iter()
        .zip(mu.iter())
        .map(|(s, m)| (s * m).abs())
        .fold(0.0f64, f64::max);
    let kkt_residual = stationarity.max(primal_eq).max(primal_in).max(dual).max(compl);

    Ok(QpSolution {
        x,
        eq_multipliers: lambda,
        ineq_multipliers: mu,
        active_set: active.to_vec(),
        kkt_residual,
        iterations,
    })
}

/// Householder QR with column pivoting, keeping the full Q as reflectors.
///
/// Factors an m×k matrix (m ≥ rank) as `A·P = Q·R`; exposes the pieces the
/// QP and SQP layers need: min-norm solutions of `Aᵀx = b`, least-squares
/// solutions of `A λ = rhs`, and an orthonormal basis of the null space of
/// `Aᵀ`.
pub struct PivotedQr {
    /// Packed reflectors (below diagonal) and R (upper triangle).
    qr: DMatrix<f64>,
    betas: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let m = a.nrows();
        let k = a.ncols();
        let mut qr = a.clone();
        let mut betas = vec![0.0; k.min(m)];
        let mut perm: Vec<usize> = (0..k).collect();
        let mut col_norms: Vec<f64> = (0..k).map(|j| qr.column(j).norm_squared()).collect();

        let steps = k.min(m);
        let mut rank = 0;
        let mut first_pivot = 0.0f64;
        for j in 0..steps {
            // Pivot: bring the column with the largest remaining norm in.
            let (pc, &pv) = col_norms
                .iter()
                .enumerate()
                .skip(j)
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            if pc != j {
                qr.swap_columns(j, pc);
                perm.swap(j, pc);
                col_norms.swap(j, pc);
            }
            let _ = pv;

            // Householder vector for column j below row j.
            let tail_len = m - j;
            let mut alpha = 0.0;
            for i in j..m {
                alpha += qr[(i, j)] * qr[(i, j)];
            }
            let alpha = alpha.sqrt();
            if j == 0 {
                first_pivot = alpha;
            }
            if alpha <= RANK_TOL * first_pivot.max(1e-300) {
                break;
            }
            rank += 1;
            let a0 = qr[(j, j)];
            let sign = if a0 >= 0.0 { 1.0 } else { -1.0 };
            let v0 = a0 + sign * alpha;
            // v = [1, tail/v0]; beta = v0 / (sign*alpha) ... use the
            // standard normalized form.
            let mut vnorm2 = 1.0;
            for i in j + 1..m {
                let vi = qr[(i, j)] / v0;
                qr[(i, j)] = vi;
                vnorm2 += vi * vi;
            }
            let beta = 2.0 / vnorm2;
            betas[j] = beta;
            qr[(j, j)] = -sign * alpha;

            // Apply reflector to the remaining columns.
            for c in j + 1..k {
                let mut dot = qr[(j, c)];
                for i in j + 1..m {
                    dot += qr[(i, j)] * qr[(i, c)];
                }
                let s = beta * dot;
                qr[(j, c)] -= s;
                for i in j + 1..m {
                    let vij = qr[(i, j)];
                    qr[(i, c)] -= s * vij;
                }
            }
            // Downdate column norms.
            for (c, norm) in col_norms.iter_mut().enumerate().skip(j + 1) {
                *norm = (*norm - qr[(j, c)] * qr[(j, c)]).max(0.0);
            }
            let _ = tail_len;
        }

        Self {
            qr,
            betas,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    fn apply_q_transpose(&self, v: &mut DVector<f64>) {
        let m = self.qr.nrows();
        for j in 0..self.rank {
            let mut dot = v[j];
            for i in j + 1..m {
                dot += self.qr[(i, j)] * v[i];
            }
            let s = self.betas[j] * dot;
            v[j] -= s;
            for i in j + 1..m {
                v[i] -= s * self.qr[(i, j)];
            }
        }
    }

    fn apply_q(&self, v: &mut DVector<f64>) {
        let m = self.qr.nrows();
        for j in (0..self.rank).rev() {
            let mut dot = v[j];
            for i in j + 1..m {
                dot += self.qr[(i, j)] * v[i];
            }
            let s = self.betas[j] * dot;
            v[j] -= s;
            for i in j + 1..m {
                v[i] -= s * self.qr[(i, j)];
            }
        }
    }

    /// Orthonormal basis of the null space of `Aᵀ` (for `A` m×k of rank r:
    /// an m×(m−r) matrix `Z` with `AᵀZ = 0`, `ZᵀZ = I`).
    pub fn null_space(&self) -> DMatrix<f64> {
        let m = self.qr.nrows();
        let dim = m - self.rank;
        let mut z = DMatrix::zeros(m, dim);
        for c in 0..dim {
            let mut e = DVector::zeros(m);
            e[self.rank + c] = 1.0;
            self.apply_q(&mut e);
            z.column_mut(c).copy_from(&e);
        }
        z
    }

    /// Minimum-norm solution of `Aᵀ x = b` together with the residual
    /// `‖Aᵀx − b‖∞` (nonzero when the system is inconsistent).
    pub fn min_norm_solution(&self, b: &DVector<f64>) -> (DVector<f64>, f64) {
        let m = self.qr.nrows();
        let k = self.perm.len();
        // Aᵀ = P Rᵀ Qᵀ ⇒ Rᵀ y = Pᵀ b with x = Q [y; 0].
        let mut b_perm = DVector::zeros(k);
        for (src, &dst) in self.perm.iter().enumerate() {
            b_perm[src] = b[dst];
        }
        let mut y = DVector::zeros(m);
        for i in 0..self.rank {
            let mut acc = b_perm[i];
            for j in 0..i {
                acc -= self.qr[(j, i)] * y[j];
            }
            y[i] = acc / self.qr[(i, i)];
        }
        // Residual from the rows beyond the rank.
        let mut residual = 0.0f64;
        for i in self.rank..k {
            let mut acc = b_perm[i];
            for j in 0..self.rank {
                acc -= self.qr[(j, i)] * y[j];
            }
            residual = residual.max(acc.abs());
        }
        let mut x = y;
        self.apply_q(&mut x);
        (x, residual)
    }

    /// Least-squares solution of `A λ = rhs` (for the factored m×k `A`).
    pub fn least_squares_transposed(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let k = self.perm.len();
        let mut qtr = rhs.clone();
        self.apply_q_transpose(&mut qtr);
        let mut y = DVector::zeros(k);
        for i in (0..self.rank).rev() {
            let mut acc = qtr[i];
            for j in i + 1..self.rank {
                acc -= self.qr[(i, j)] * y[j];
            }
            y[i] = acc / self.qr[(i, i)];
        }
        let mut lambda = DVector::zeros(k);
        for (src, &dst) in self.perm.iter().enumerate() {
            lambda[dst] = y[src];
        }
        lambda
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * (n as f64)
    }

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn clamped_scalar_minimum() {
        // min (x−1)² s.t. x ≤ 0.5 → x = 0.5.
        let h = DMatrix::from_row_slice(1, 1, &[2.0]);
        let g = dvec(&[-2.0]);
        let a_in = DMatrix::from_row_slice(1, 1, &[1.0]);
        let b_in = dvec(&[0.5]);
        let sol = solve(&QpProblemData {
            h: &h,
            g: &g,
            a_eq: &DMatrix::zeros(0, 1),
            b_eq: &dvec(&[]),
            a_in: &a_in,
            b_in: &b_in,
        })
        .unwrap();
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-12);
        assert!(sol.kkt_residual <= 1e-9);
    }

    #[test]
    fn inactive_inequalities_match_unconstrained() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random_spd(4, &mut rng);
        let g = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let a_in = DMatrix::identity(4, 4);
        let b_in = dvec(&[1e6, 1e6, 1e6, 1e6]);
        let sol = solve(&QpProblemData {
            h: &h,
            g: &g,
            a_eq: &DMatrix::zeros(0, 4),
            b_eq: &dvec(&[]),
            a_in: &a_in,
            b_in: &b_in,
        })
        .unwrap();
        let unconstrained = nalgebra::Cholesky::new(h.clone()).unwrap().solve(&(-&g));
        assert!((sol.x - unconstrained).amax() < 1e-10);
        assert!(sol.active_set.is_empty());
    }

    #[test]
    fn equality_constrained_matches_dense_kkt_oracle() {
        // Oracle: solve [H Aᵀ; A 0][x; λ] = [−g; b] directly.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..25 {
            let n = rng.gen_range(3..9);
            let me = rng.gen_range(1..n);
            let h = random_spd(n, &mut rng);
            let g = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let a_eq = DMatrix::from_fn(me, n, |_, _| rng.gen_range(-1.0..1.0));
            let b_eq = DVector::from_fn(me, |_, _| rng.gen_range(-1.0..1.0));

            let mut kkt = DMatrix::zeros(n + me, n + me);
            kkt.view_mut((0, 0), (n, n)).copy_from(&h);
            kkt.view_mut((n, 0), (me, n)).copy_from(&a_eq);
            kkt.view_mut((0, n), (n, me)).copy_from(&a_eq.transpose());
            let mut rhs = DVector::zeros(n + me);
            for i in 0..n {
                rhs[i] = -g[i];
            }
            for i in 0..me {
                rhs[n + i] = b_eq[i];
            }
            let oracle = nalgebra::LU::new(kkt).solve(&rhs).unwrap();

            let sol = solve(&QpProblemData {
                h: &h,
                g: &g,
                a_eq: &a_eq,
                b_eq: &b_eq,
                a_in: &DMatrix::zeros(0, n),
                b_in: &dvec(&[]),
            })
            .unwrap();
            assert!(
                (sol.x.clone() - oracle.rows(0, n)).amax() <= 1e-9,
                "primal mismatch {}",
                (sol.x - oracle.rows(0, n)).amax()
            );
            assert!(sol.kkt_residual <= 1e-9);
        }
    }

    #[test]
    fn mixed_constraints_kkt_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let n = rng.gen_range(3..10);
            let me = rng.gen_range(0..n / 2 + 1);
            let mi = rng.gen_range(1..2 * n);
            let h = random_spd(n, &mut rng);
            let g = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let a_eq = DMatrix::from_fn(me, n, |_, _| rng.gen_range(-1.0..1.0));
            // Feasible by construction: take a point and offset the rhs.
            let x_feas = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let b_eq = &a_eq * &x_feas;
            let a_in = DMatrix::from_fn(mi, n, |_, _| rng.gen_range(-1.0..1.0));
            let b_in = &a_in * &x_feas + DVector::from_fn(mi, |_, _| rng.gen_range(0.0..1.0));

            let sol = solve(&QpProblemData {
                h: &h,
                g: &g,
                a_eq: &a_eq,
                b_eq: &b_eq,
                a_in: &a_in,
                b_in: &b_in,
            })
            .unwrap();
            assert!(
                sol.kkt_residual <= 1e-8,
                "kkt residual {} too large",
                sol.kkt_residual
            );
        }
    }

    #[test]
    fn detects_infeasible_box() {
        // x ≤ 0 and −x ≤ −1 cannot hold together.
        let h = DMatrix::from_row_slice(1, 1, &[1.0]);
        let g = dvec(&[0.0]);
        let a_in = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b_in = dvec(&[0.0, -1.0]);
        let err = solve(&QpProblemData {
            h: &h,
            g: &g,
            a_eq: &DMatrix::zeros(0, 1),
            b_eq: &dvec(&[]),
            a_in: &a_in,
            b_in: &b_in,
        })
        .unwrap_err();
        assert!(matches!(err, QpError::Infeasible { .. }), "got {err:?}");
    }

    #[test]
    fn detects_inconsistent_equalities() {
        let h = DMatrix::identity(2, 2);
        let g = dvec(&[0.0, 0.0]);
        let a_eq = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let b_eq = dvec(&[0.0, 1.0]);
        let err = solve(&QpProblemData {
            h: &h,
            g: &g,
            a_eq: &a_eq,
            b_eq: &b_eq,
            a_in: &DMatrix::zeros(0, 2),
            b_in: &dvec(&[]),
        })
        .unwrap_err();
        assert!(matches!(err, QpError::Infeasible { .. }));
    }

    #[test]
    fn pivoted_qr_null_space_is_orthonormal_annihilator() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = rng.gen_range(4..12);
            let k = rng.gen_range(1..m);
            let a = DMatrix::from_fn(m, k, |_, _| rng.gen_range(-1.0..1.0));
            let qr = PivotedQr::new(&a);
            assert_eq!(qr.rank(), k);
            let z = qr.null_space();
            assert_eq!(z.ncols(), m - k);
            assert!((a.transpose() * &z).amax() < 1e-12);
            assert!((z.transpose() * &z - DMatrix::identity(m - k, m - k)).amax() < 1e-12);
        }
    }

    #[test]
    fn pivoted_qr_handles_rank_deficiency() {
        // Two identical constraints: rank 1, consistent rhs.
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
        let qr = PivotedQr::new(&a);
        assert_eq!(qr.rank(), 1);
        let (x, residual) = qr.min_norm_solution(&dvec(&[3.0, 3.0]));
        assert!(residual < 1e-12);
        assert_abs_diff_eq!(x[0] + 2.0 * x[1], 3.0, epsilon = 1e-12);
        let z = qr.null_space();
        assert_eq!(z.ncols(), 2);
    }
}
