//! Brute-force QP oracle used only for verification: enumerate every active
//! set, solve the stationary KKT system and keep the best feasible point.
//!
//! Independent of the active-set solver: only problem data and a dense LU
//! factorization are used. Practical up to ~20 candidate bounds.

use nalgebra::{DMatrix, DVector};

use super::QpProblem;

/// Generate a random strictly convex QP that is feasible by construction
/// (bounds are placed around a sampled interior point).
pub fn random_qp(rng: &mut impl rand::Rng, n_max: usize) -> QpProblem {
    use super::{ConstraintFamily, DecisionLayout};
    let n = rng.gen_range(2..=n_max.max(2));
    let me = rng.gen_range(0..=(n / 3));
    let mi = rng.gen_range(2..=7);

    let l = DMatrix::from_fn(n, n, |r, c| if r >= c { rng.gen_range(-1.0..1.0) } else { 0.0 });
    let mut hessian = &l * l.transpose();
    for i in 0..n {
        hessian[(i, i)] += 0.5;
    }
    let gradient = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let x_feas = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));

    let a_eq = DMatrix::from_fn(me, n, |_, _| rng.gen_range(-1.0..1.0));
    let b_eq = &a_eq * &x_feas;

    let c_ineq = DMatrix::from_fn(mi, n, |_, _| rng.gen_range(-1.0..1.0));
    let cx = &c_ineq * &x_feas;
    let mut d_lo = DVector::from_element(mi, f64::NEG_INFINITY);
    let mut d_hi = DVector::from_element(mi, f64::INFINITY);
    for i in 0..mi {
        match rng.gen_range(0..3) {
            0 => d_lo[i] = cx[i] - rng.gen_range(0.0..0.8),
            1 => d_hi[i] = cx[i] + rng.gen_range(0.0..0.8),
            _ => {
                d_lo[i] = cx[i] - rng.gen_range(0.05..0.8);
                d_hi[i] = cx[i] + rng.gen_range(0.05..0.8);
            }
        }
    }

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
        layout: DecisionLayout { stance_legs: vec![], swing_legs: vec![], slacks_enabled: false },
    }
}

/// Globally minimize by exhaustive active-set enumeration. Returns the
/// minimizer and its objective, or `None` if no subset yields a feasible
/// stationary point (infeasible problem) or the problem is too large.
pub fn solve_by_enumeration(problem: &QpProblem) -> Option<(DVector<f64>, f64)> {
    let n = problem.n();
    let me = problem.n_eq();

    // candidate (row, at-upper?) pairs for every finite bound
    let mut candidates: Vec<(usize, bool)> = Vec::new();
    for i in 0..problem.n_ineq() {
        if problem.d_lo[i].is_finite() {
            candidates.push((i, false));
        }
        if problem.d_hi[i].is_finite() {
            candidates.push((i, true));
        }
    }
    if candidates.len() > 20 {
        return None;
    }

    let feas_tol = 1e-8 * (1.0 + problem.b_eq.amax().max(problem.d_lo.iter().fold(0.0f64, |a, &v| if v.is_finite() { a.max(v.abs()) } else { a })));
    let mut best: Option<(DVector<f64>, f64)> = None;

    'subsets: for mask in 0u32..(1 << candidates.len()) {
        // reject subsets activating both sides of one row
        let mut chosen: Vec<(usize, bool)> = Vec::new();
        for (k, &(row, upper)) in candidates.iter().enumerate() {
            if mask & (1 << k) != 0 {
                if chosen.iter().any(|&(r, _)| r == row) {
                    continue 'subsets;
                }
                chosen.push((row, upper));
            }
        }
        let ma = me + chosen.len();
        if ma > n {
            continue;
        }

        // stationary point on the subset: [H A^T; A 0] [x; nu] = [-g; b]
        let dim = n + ma;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&problem.hessian);
        for r in 0..me {
            for c in 0..n {
                kkt[(n + r, c)] = problem.a_eq[(r, c)];
                kkt[(c, n + r)] = problem.a_eq[(r, c)];
            }
            rhs[n + r] = problem.b_eq[r];
        }
        for (k, &(row, upper)) in chosen.iter().enumerate() {
            for c in 0..n {
                kkt[(n + me + k, c)] = problem.c_ineq[(row, c)];
                kkt[(c, n + me + k)] = problem.c_ineq[(row, c)];
            }
            rhs[n + me + k] = if upper { problem.d_hi[row] } else { problem.d_lo[row] };
        }
        for i in 0..n {
            rhs[i] = -problem.gradient[i];
        }
        let lu = kkt.lu();
        let Some(sol) = lu.solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        if !x.iter().all(|v| v.is_finite()) {
            continue;
        }
        if problem.max_violation(&x) > feas_tol {
            continue;
        }
        let obj = problem.objective(&x);
        if best.as_ref().map(|(_, b)| obj < *b).unwrap_or(true) {
            best = Some((x, obj));
        }
    }
    best
}
