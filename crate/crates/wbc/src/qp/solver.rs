//! Primal active-set solver for small dense convex QPs.
//!
//! The equality-constrained subproblem is solved through a null-space
//! factorization; warm starting reuses the previous tick's iterate and
//! active set. Feasibility is restored, when needed, by a phase-1 run of
//! the same loop on a slack-extended problem.

use nalgebra::{DMatrix, DVector};
use std::time::Instant;

use super::linalg::FullQr;
use super::{ConstraintFamily, QpError, QpProblem};

/// Which bound an inequality row is active at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
    Unbounded,
}

/// KKT residuals, all infinity-norm, recomputed from problem data.
#[derive(Debug, Clone, Copy, Default)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_ineq: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal_eq).max(self.primal_ineq).max(self.complementarity)
    }
}

/// Warm-start data carried between consecutive control ticks.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub x: DVector<f64>,
    pub active: Vec<(usize, Side)>,
}

/// Solver output: iterate, duals, certification and bookkeeping.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: SolveStatus,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub solve_time_us: f64,
    /// Active inequality rows at the solution.
    pub active_set: Vec<(usize, Side)>,
    /// Equality multipliers.
    pub dual_eq: DVector<f64>,
    /// Signed inequality multipliers: positive at the lower bound, negative
    /// at the upper bound, zero when inactive.
    pub dual_ineq: DVector<f64>,
    pub objective: f64,
    /// For infeasible problems: flat row index and family of the most
    /// violated constraint.
    pub infeasible_row: Option<(usize, ConstraintFamily, f64)>,
}

impl QpSolution {
    /// Generalized accelerations block (first 18 entries).
    pub fn qddot(&self) -> DVector<f64> {
        self.x.rows(0, crate::NV).into_owned()
    }

    /// Contact-force block, stance legs in leg order.
    pub fn forces(&self, problem: &QpProblem) -> DVector<f64> {
        self.x.rows(problem.layout.force_offset(), problem.layout.n_st()).into_owned()
    }

    /// Slack block (empty when slacks are disabled).
    pub fn slacks(&self, problem: &QpProblem) -> DVector<f64> {
        self.x.rows(problem.layout.slack_offset(), problem.layout.n_slack()).into_owned()
    }

    pub fn warm_start(&self) -> WarmStart {
        WarmStart { x: self.x.clone(), active: self.active_set.clone() }
    }
}

/// Dense active-set QP solver. One instance per controller; stateless
/// between calls except for configuration.
#[derive(Debug, Clone)]
pub struct QpSolver {
    pub max_iterations: usize,
    /// KKT certification tolerance (infinity norm).
    pub kkt_tolerance: f64,
    /// Primal feasibility tolerance.
    pub feas_tolerance: f64,
}

impl Default for QpSolver {
    fn default() -> Self {
        QpSolver { max_iterations: 200, kkt_tolerance: 1e-6, feas_tolerance: 1e-8 }
    }
}

struct CoreResult {
    x: DVector<f64>,
    active: Vec<(usize, Side)>,
    iterations: usize,
    converged: bool,
    early_exit: bool,
    unbounded: bool,
}

impl QpSolver {
    /// Solve `problem`, optionally warm starting from a previous solution.
    pub fn solve(&self, problem: &QpProblem, warm: Option<&WarmStart>) -> Result<QpSolution, QpError> {
        let start = Instant::now();
        problem.validate()?;
        let n = problem.n();
        let me = problem.n_eq();

        // equality rows must be independent for the null-space method
        if me > 0 {
            let qr = FullQr::new(&problem.a_eq.transpose());
            if qr.rank(1e-9 * problem.a_eq.amax().max(1.0)) < me {
                return Err(QpError::RankDeficientEqualities);
            }
        }

        let mut iterations_total = 0;

        // initial feasible point: warm start, plain equality solve, or phase-1
        let mut init: Option<(DVector<f64>, Vec<(usize, Side)>)> = None;
        if let Some(ws) = warm {
            if ws.x.len() == n {
                let x = self.project_to_equalities(problem, &ws.x);
                if problem.max_violation(&x) <= self.feas_tolerance {
                    let active = self.filter_active(problem, &x, &ws.active);
                    init = Some((x, active));
                }
            }
        }
        if init.is_none() {
            let x0 = self.least_norm_equality_point(problem);
            if problem.max_violation(&x0) <= self.feas_tolerance {
                init = Some((x0, Vec::new()));
            } else {
                match self.phase1(problem, &x0)? {
                    Phase1Outcome::Feasible { x, iterations } => {
                        iterations_total += iterations;
                        let active = self.filter_active(problem, &x, &[]);
                        init = Some((x, active));
                    }
                    Phase1Outcome::Infeasible { x, iterations } => {
                        iterations_total += iterations;
                        let worst = problem.most_violated_row(&x);
                        return Ok(QpSolution {
                            objective: problem.objective(&x),
                            x,
                            status: SolveStatus::Infeasible,
                            kkt: KktResiduals::default(),
                            iterations: iterations_total,
                            solve_time_us: start.elapsed().as_secs_f64() * 1e6,
                            active_set: Vec::new(),
                            dual_eq: DVector::zeros(me),
                            dual_ineq: DVector::zeros(problem.n_ineq()),
                            infeasible_row: worst,
                        });
                    }
                }
            }
        }
        let (x0, active0) = init.expect("initial point set above");

        let core = self.core_loop(
            &problem.hessian,
            &problem.gradient,
            &problem.a_eq,
            &problem.c_ineq,
            &problem.d_lo,
            &problem.d_hi,
            x0,
            active0,
            self.max_iterations,
            None,
        );
        iterations_total += core.iterations;

        let (dual_eq, dual_ineq) = self.recover_duals(problem, &core.x, &core.active);
        let kkt = certify(problem, &core.x, &dual_eq, &dual_ineq);
        let status = if core.unbounded {
            SolveStatus::Unbounded
        } else if core.converged && kkt.max() <= self.kkt_tolerance {
            SolveStatus::Optimal
        } else {
            SolveStatus::MaxIter
        };

        Ok(QpSolution {
            objective: problem.objective(&core.x),
            x: core.x,
            status,
            kkt,
            iterations: iterations_total,
            solve_time_us: start.elapsed().as_secs_f64() * 1e6,
            active_set: core.active,
            dual_eq,
            dual_ineq,
            infeasible_row: None,
        })
    }

    fn project_to_equalities(&self, problem: &QpProblem, x: &DVector<f64>) -> DVector<f64> {
        if problem.n_eq() == 0 {
            return x.clone();
        }
        let resid = &problem.b_eq - &problem.a_eq * x;
        let qr = FullQr::new(&problem.a_eq.transpose());
        match qr.solve_transposed_min_norm(&resid) {
            Some(dx) => x + dx,
            None => x.clone(),
        }
    }

    fn least_norm_equality_point(&self, problem: &QpProblem) -> DVector<f64> {
        let n = problem.n();
        if problem.n_eq() == 0 {
            return DVector::zeros(n);
        }
        let qr = FullQr::new(&problem.a_eq.transpose());
        qr.solve_transposed_min_norm(&problem.b_eq).unwrap_or_else(|| DVector::zeros(n))
    }

    /// Keep only warm-start entries that are still active at `x`, dropping
    /// duplicates and rows that would make the working set rank deficient.
    fn filter_active(
        &self,
        problem: &QpProblem,
        x: &DVector<f64>,
        proposed: &[(usize, Side)],
    ) -> Vec<(usize, Side)> {
        let act_tol = 1e-7;
        let cx = &problem.c_ineq * x;
        let mut active: Vec<(usize, Side)> = Vec::new();
        for &(row, side) in proposed {
            if row >= problem.n_ineq() {
                continue;
            }
            let at_bound = match side {
                Side::Lower => problem.d_lo[row].is_finite() && (cx[row] - problem.d_lo[row]).abs() <= act_tol,
                Side::Upper => problem.d_hi[row].is_finite() && (problem.d_hi[row] - cx[row]).abs() <= act_tol,
            };
            if at_bound && !active.iter().any(|(r, _)| *r == row) {
                active.push((row, side));
            }
        }
        // enforce independence of [A; active rows]
        let mut kept: Vec<(usize, Side)> = Vec::new();
        for entry in active {
            let mut trial = kept.clone();
            trial.push(entry);
            if self.working_set_independent(problem, &trial) {
                kept.push(entry);
            }
        }
        kept
    }

    fn working_set_independent(&self, problem: &QpProblem, active: &[(usize, Side)]) -> bool {
        let me = problem.n_eq();
        let rows = me + active.len();
        if rows == 0 {
            return true;
        }
        if rows > problem.n() {
            return false;
        }
        let mut at = DMatrix::zeros(problem.n(), rows);
        for r in 0..me {
            at.column_mut(r).copy_from(&problem.a_eq.row(r).transpose());
        }
        for (k, (row, _)) in active.iter().enumerate() {
            at.column_mut(me + k).copy_from(&problem.c_ineq.row(*row).transpose());
        }
        let qr = FullQr::new(&at);
        qr.rank(1e-9 * at.amax().max(1.0)) == rows
    }

    fn phase1(&self, problem: &QpProblem, x0: &DVector<f64>) -> Result<Phase1Outcome, QpError> {
        let n = problem.n();
        let mi = problem.n_ineq();
        let np = n + 1;
        let scale = problem.hessian.amax().max(1.0);

        // minimize s (+ tiny regularization for a PD reduced Hessian)
        let mut hess = DMatrix::zeros(np, np);
        for i in 0..n {
            hess[(i, i)] = 1e-9 * scale;
        }
        hess[(n, n)] = 1e-6 * scale;
        let mut grad = DVector::zeros(np);
        grad[n] = scale;

        let mut a_eq = DMatrix::zeros(problem.n_eq(), np);
        a_eq.view_mut((0, 0), (problem.n_eq(), n)).copy_from(&problem.a_eq);

        // each finite bound becomes a one-sided row relaxed by s, plus a
        // lower bound on s itself to keep the LP-like problem bounded
        let mut rows: Vec<(DVector<f64>, f64, f64)> = Vec::new();
        for i in 0..mi {
            if problem.d_lo[i].is_finite() {
                let mut r = DVector::zeros(np);
                r.rows_mut(0, n).copy_from(&problem.c_ineq.row(i).transpose());
                r[n] = 1.0;
                rows.push((r, problem.d_lo[i], f64::INFINITY));
            }
            if problem.d_hi[i].is_finite() {
                let mut r = DVector::zeros(np);
                r.rows_mut(0, n).copy_from(&problem.c_ineq.row(i).transpose());
                r[n] = -1.0;
                rows.push((r, f64::NEG_INFINITY, problem.d_hi[i]));
            }
        }
        {
            let mut r = DVector::zeros(np);
            r[n] = 1.0;
            rows.push((r, -1.0, f64::INFINITY));
        }
        let m = rows.len();
        let mut c = DMatrix::zeros(m, np);
        let mut d_lo = DVector::zeros(m);
        let mut d_hi = DVector::zeros(m);
        for (k, (r, lo, hi)) in rows.iter().enumerate() {
            c.row_mut(k).copy_from(&r.transpose());
            d_lo[k] = *lo;
            d_hi[k] = *hi;
        }

        let mut x_start = DVector::zeros(np);
        x_start.rows_mut(0, n).copy_from(x0);
        x_start[n] = problem.max_violation(x0) + 1.0;

        let core = self.core_loop(
            &hess,
            &grad,
            &a_eq,
            &c,
            &d_lo,
            &d_hi,
            x_start,
            Vec::new(),
            4 * self.max_iterations,
            Some(&|x: &DVector<f64>| x[x.len() - 1] <= 0.0),
        );

        let x = core.x.rows(0, n).into_owned();
        if core.early_exit || problem.max_violation(&x) <= self.feas_tolerance {
            Ok(Phase1Outcome::Feasible { x, iterations: core.iterations })
        } else {
            Ok(Phase1Outcome::Infeasible { x, iterations: core.iterations })
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn core_loop(
        &self,
        hess: &DMatrix<f64>,
        grad_lin: &DVector<f64>,
        a_eq: &DMatrix<f64>,
        c: &DMatrix<f64>,
        d_lo: &DVector<f64>,
        d_hi: &DVector<f64>,
        mut x: DVector<f64>,
        mut active: Vec<(usize, Side)>,
        max_iter: usize,
        early_exit: Option<&dyn Fn(&DVector<f64>) -> bool>,
    ) -> CoreResult {
        let n = x.len();
        let me = a_eq.nrows();
        let mi = c.nrows();
        let mut iterations = 0;
        let mut stalls = 0usize;
        let mut bland = false;
        #[cfg(debug_assertions)]
        let mut obj_prev = 0.5 * x.dot(&(hess * &x)) + grad_lin.dot(&x);

        loop {
            if let Some(f) = early_exit {
                if f(&x) {
                    return CoreResult { x, active, iterations, converged: false, early_exit: true, unbounded: false };
                }
            }
            if iterations >= max_iter {
                return CoreResult { x, active, iterations, converged: false, early_exit: false, unbounded: false };
            }
            iterations += 1;

            // working-set matrix (transposed) and its QR
            let mw = me + active.len();
            let mut at = DMatrix::zeros(n, mw);
            for r in 0..me {
                at.column_mut(r).copy_from(&a_eq.row(r).transpose());
            }
            for (k, (row, _)) in active.iter().enumerate() {
                at.column_mut(me + k).copy_from(&c.row(*row).transpose());
            }
            let qr = FullQr::new(&at);

            let grad = hess * &x + grad_lin;

            // equality-constrained step in the null space of the working set
            let nz = n - mw;
            let p = if nz > 0 {
                let z = qr.null_basis(mw);
                let hz = z.transpose() * hess * &z;
                let gz = z.transpose() * &grad;
                match hz.cholesky() {
                    Some(ch) => {
                        let pz = ch.solve(&(-gz));
                        &z * pz
                    }
                    None => {
                        return CoreResult {
                            x,
                            active,
                            iterations,
                            converged: false,
                            early_exit: false,
                            unbounded: true,
                        }
                    }
                }
            } else {
                DVector::zeros(n)
            };

            let step_scale = 1.0 + x.amax();
            if p.amax() <= 1e-11 * step_scale {
                // stationary on the working set: check multiplier signs
                let lambda = if mw > 0 {
                    qr.solve_full_rank(&grad).unwrap_or_else(|| DVector::zeros(mw))
                } else {
                    DVector::zeros(0)
                };
                // (position in working set, constraint row, sign violation)
                let mut drop_candidate: Option<(usize, usize, f64)> = None;
                for (k, (row, side)) in active.iter().enumerate() {
                    let lam = lambda[me + k];
                    let viol = match side {
                        Side::Lower => -lam,
                        Side::Upper => lam,
                    };
                    if viol > 1e-10 * (1.0 + grad.amax()) {
                        let better = match drop_candidate {
                            None => true,
                            // lowest constraint row wins under Bland's rule,
                            // largest violation otherwise
                            Some((_, best_row, best_viol)) => {
                                if bland {
                                    *row < best_row
                                } else {
                                    viol > best_viol
                                }
                            }
                        };
                        if better {
                            drop_candidate = Some((k, *row, viol));
                        }
                    }
                }
                match drop_candidate {
                    None => {
                        return CoreResult {
                            x,
                            active,
                            iterations,
                            converged: true,
                            early_exit: false,
                            unbounded: false,
                        }
                    }
                    Some((k, _, _)) => {
                        active.remove(k);
                        stalls += 1;
                        if stalls > n {
                            bland = true;
                        }
                        continue;
                    }
                }
            }

            // ratio test against inactive rows
            let cp = c * &p;
            let cx = c * &x;
            let mut alpha = 1.0f64;
            let mut blockers: Vec<(usize, Side)> = Vec::new();
            for row in 0..mi {
                if active.iter().any(|(r, _)| *r == row) {
                    continue;
                }
                let dir = cp[row];
                if dir < -1e-12 && d_lo[row].is_finite() {
                    let a = (d_lo[row] - cx[row]) / dir;
                    if a < alpha - 1e-12 {
                        alpha = a.max(0.0);
                        blockers = vec![(row, Side::Lower)];
                    } else if (a - alpha).abs() <= 1e-12 {
                        blockers.push((row, Side::Lower));
                    }
                } else if dir > 1e-12 && d_hi[row].is_finite() {
                    let a = (d_hi[row] - cx[row]) / dir;
                    if a < alpha - 1e-12 {
                        alpha = a.max(0.0);
                        blockers = vec![(row, Side::Upper)];
                    } else if (a - alpha).abs() <= 1e-12 {
                        blockers.push((row, Side::Upper));
                    }
                }
            }

            if alpha > 0.0 {
                x += alpha * &p;
                stalls = 0;
            } else {
                stalls += 1;
                if stalls > n {
                    bland = true;
                }
                if stalls > 4 * n {
                    return CoreResult { x, active, iterations, converged: false, early_exit: false, unbounded: false };
                }
            }

            #[cfg(debug_assertions)]
            {
                let obj = 0.5 * x.dot(&(hess * &x)) + grad_lin.dot(&x);
                debug_assert!(
                    obj <= obj_prev + 1e-7 * (1.0 + obj_prev.abs()),
                    "objective increased: {obj_prev} -> {obj}"
                );
                obj_prev = obj;
            }

            if alpha < 1.0 {
                // add one blocking row, keeping the working set independent;
                // blockers are tried in ascending row order
                blockers.sort_by_key(|(r, _)| *r);
                for cand in blockers {
                    let mut trial = active.clone();
                    trial.push(cand);
                    let mut at2 = DMatrix::zeros(n, me + trial.len());
                    for r in 0..me {
                        at2.column_mut(r).copy_from(&a_eq.row(r).transpose());
                    }
                    for (k, (row, _)) in trial.iter().enumerate() {
                        at2.column_mut(me + k).copy_from(&c.row(*row).transpose());
                    }
                    let qr2 = FullQr::new(&at2);
                    if qr2.rank(1e-9 * at2.amax().max(1.0)) == me + trial.len() {
                        active = trial;
                        break;
                    }
                }
            }
        }
    }

    fn recover_duals(
        &self,
        problem: &QpProblem,
        x: &DVector<f64>,
        active: &[(usize, Side)],
    ) -> (DVector<f64>, DVector<f64>) {
        let me = problem.n_eq();
        let n = problem.n();
        let mw = me + active.len();
        let mut dual_eq = DVector::zeros(me);
        let mut dual_ineq = DVector::zeros(problem.n_ineq());
        if mw == 0 {
            return (dual_eq, dual_ineq);
        }
        let mut at = DMatrix::zeros(n, mw);
        for r in 0..me {
            at.column_mut(r).copy_from(&problem.a_eq.row(r).transpose());
        }
        for (k, (row, _)) in active.iter().enumerate() {
            at.column_mut(me + k).copy_from(&problem.c_ineq.row(*row).transpose());
        }
        let qr = FullQr::new(&at);
        let grad = &problem.hessian * x + &problem.gradient;
        if let Some(lambda) = qr.solve_full_rank(&grad) {
            for r in 0..me {
                dual_eq[r] = lambda[r];
            }
            for (k, (row, _)) in active.iter().enumerate() {
                dual_ineq[*row] = lambda[me + k];
            }
        }
        (dual_eq, dual_ineq)
    }
}

enum Phase1Outcome {
    Feasible { x: DVector<f64>, iterations: usize },
    Infeasible { x: DVector<f64>, iterations: usize },
}

/// Recompute all KKT residuals from scratch, independent of solver
/// internals.
pub fn certify(
    problem: &QpProblem,
    x: &DVector<f64>,
    dual_eq: &DVector<f64>,
    dual_ineq: &DVector<f64>,
) -> KktResiduals {
    let grad = &problem.hessian * x + &problem.gradient;
    let mut stat = grad.clone();
    if problem.n_eq() > 0 {
        stat -= problem.a_eq.transpose() * dual_eq;
    }
    if problem.n_ineq() > 0 {
        stat -= problem.c_ineq.transpose() * dual_ineq;
    }
    let stationarity = stat.amax();

    let primal_eq = if problem.n_eq() > 0 {
        (&problem.a_eq * x - &problem.b_eq).amax()
    } else {
        0.0
    };

    let cx = &problem.c_ineq * x;
    let mut primal_ineq: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    for i in 0..problem.n_ineq() {
        primal_ineq = primal_ineq.max(problem.d_lo[i] - cx[i]).max(cx[i] - problem.d_hi[i]);
        let mu = dual_ineq[i];
        if mu > 0.0 && problem.d_lo[i].is_finite() {
            complementarity = complementarity.max((mu * (cx[i] - problem.d_lo[i])).abs());
        } else if mu < 0.0 && problem.d_hi[i].is_finite() {
            complementarity = complementarity.max((mu * (problem.d_hi[i] - cx[i])).abs());
        } else if mu != 0.0 {
            // multiplier on a row with no finite bound on that side
            complementarity = complementarity.max(mu.abs());
        }
    }
    KktResiduals { stationarity, primal_eq, primal_ineq: primal_ineq.max(0.0), complementarity }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::oracle::{random_qp, solve_by_enumeration};
    use crate::qp::{ConstraintFamily, DecisionLayout};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn empty_layout() -> DecisionLayout {
        DecisionLayout { stance_legs: vec![], swing_legs: vec![], slacks_enabled: false }
    }

    fn problem(
        hessian: DMatrix<f64>,
        gradient: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        c_ineq: DMatrix<f64>,
        d_lo: DVector<f64>,
        d_hi: DVector<f64>,
    ) -> QpProblem {
        let me = a_eq.nrows();
        let mi = c_ineq.nrows();
        QpProblem {
            hessian,
            gradient,
            a_eq,
            b_eq,
            c_ineq,
            d_lo,
            d_hi,
            eq_provenance: vec![ConstraintFamily::PhysicalConsistency; me],
            ineq_provenance: vec![ConstraintFamily::Friction; mi],
            layout: empty_layout(),
        }
    }

    #[test]
    fn one_dim_bound_becomes_active() {
        // min x^2 s.t. x >= 1  ->  x* = 1
        let p = problem(
            DMatrix::from_element(1, 1, 2.0),
            DVector::zeros(1),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
            DVector::from_element(1, f64::INFINITY),
        );
        let sol = QpSolver::default().solve(&p, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-10);
        assert!(sol.kkt.max() <= 1e-6);
        assert_eq!(sol.active_set, vec![(0, Side::Lower)]);
    }

    #[test]
    fn symmetric_equality_split() {
        // min 1/2 x^T x s.t. x1 + x2 = 1  ->  (0.5, 0.5)
        let p = problem(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 1.0),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DVector::zeros(0),
        );
        let sol = QpSolver::default().solve(&p, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.x[0], 0.5, epsilon = 1e-10);
        assert_relative_eq!(sol.x[1], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn equality_only_matches_closed_form_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let mut p = random_qp(&mut rng, 8);
            // strip inequalities
            p.c_ineq = DMatrix::zeros(0, p.n());
            p.d_lo = DVector::zeros(0);
            p.d_hi = DVector::zeros(0);
            p.ineq_provenance.clear();
            if p.n_eq() == 0 {
                continue;
            }
            let sol = QpSolver::default().solve(&p, None).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);

            // closed-form KKT solve
            let n = p.n();
            let me = p.n_eq();
            let mut kkt = DMatrix::zeros(n + me, n + me);
            kkt.view_mut((0, 0), (n, n)).copy_from(&p.hessian);
            kkt.view_mut((n, 0), (me, n)).copy_from(&p.a_eq);
            kkt.view_mut((0, n), (n, me)).copy_from(&p.a_eq.transpose());
            let mut rhs = DVector::zeros(n + me);
            rhs.rows_mut(0, n).copy_from(&(-&p.gradient));
            rhs.rows_mut(n, me).copy_from(&p.b_eq);
            let direct = kkt.lu().solve(&rhs).unwrap();
            for i in 0..n {
                assert_relative_eq!(sol.x[i], direct[i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn matches_enumeration_oracle_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let solver = QpSolver::default();
        let mut checked = 0;
        for _ in 0..100 {
            let p = random_qp(&mut rng, 10);
            let sol = solver.solve(&p, None).unwrap();
            let oracle = solve_by_enumeration(&p).expect("feasible by construction");
            assert_eq!(sol.status, SolveStatus::Optimal, "problem should solve: kkt {:?}", sol.kkt);
            assert!(
                (sol.objective - oracle.1).abs() <= 1e-8 * (1.0 + oracle.1.abs()),
                "objective {} vs oracle {}",
                sol.objective,
                oracle.1
            );
            checked += 1;
        }
        assert_eq!(checked, 100);
    }

    #[test]
    fn certify_flags_perturbed_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_qp(&mut rng, 6);
        let solver = QpSolver::default();
        let sol = solver.solve(&p, None).unwrap();
        assert!(sol.kkt.max() <= 1e-6);

        let mut x = sol.x.clone();
        x[0] += 1e-3;
        let kkt = certify(&p, &x, &sol.dual_eq, &sol.dual_ineq);
        assert!(
            kkt.stationarity > 1e-4 || kkt.primal_eq > 1e-4,
            "perturbation must show up in the residuals: {kkt:?}"
        );
    }

    #[test]
    fn infeasible_problem_reports_provenance() {
        // x >= 1 and x <= 0 cannot hold together
        let p = problem(
            DMatrix::from_element(1, 1, 2.0),
            DVector::zeros(1),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0, f64::NEG_INFINITY]),
            DVector::from_vec(vec![f64::INFINITY, 0.0]),
        );
        let sol = QpSolver::default().solve(&p, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        let (row, fam, viol) = sol.infeasible_row.expect("most violated row reported");
        assert!(viol > 0.4);
        assert_eq!(fam, ConstraintFamily::Friction);
        assert!(row >= p.n_eq());
    }

    #[test]
    fn warm_start_is_deterministic_and_cheaper() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let solver = QpSolver::default();
        let p = random_qp(&mut rng, 10);
        let cold = solver.solve(&p, None).unwrap();

        // identical problem + warm start: bit-identical result
        let w = cold.warm_start();
        let a = solver.solve(&p, Some(&w)).unwrap();
        let b = solver.solve(&p, Some(&w)).unwrap();
        assert_eq!(a.x.as_slice(), b.x.as_slice());
        assert_eq!(a.iterations, b.iterations);

        // restarting at the optimum costs at most a couple of iterations
        assert!(a.iterations <= cold.iterations.max(2), "warm {} vs cold {}", a.iterations, cold.iterations);
        assert_eq!(a.status, SolveStatus::Optimal);
        assert_relative_eq!(a.objective, cold.objective, epsilon = 1e-10);
    }

    #[test]
    fn unit_slack_invariants_on_solutions() {
        // solver keeps iterates feasible: inequality violation stays tiny
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let solver = QpSolver::default();
        for _ in 0..50 {
            let p = random_qp(&mut rng, 8);
            let sol = solver.solve(&p, None).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!(p.max_violation(&sol.x) <= 1e-8);
        }
    }
}
