//! Builders for the per-tick whole-body QP: cost, dynamics-consistency,
//! stance/swing rows, friction pyramids, torque and kinematic limits, with
//! optional slack softening of the swing rows.

use nalgebra::{DMatrix, DVector, Matrix6, SVector, Vector6};

use super::{ConstraintFamily, DecisionLayout, QpError, QpProblem};
use crate::math::tangent_basis;
use crate::model::{ContactState, DynamicsQuantities};
use crate::{NUM_JOINTS, NV};

/// Regularization scheme for the force block of the cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizationMode {
    /// Plain force regularization: robust to friction uncertainty.
    Robustness,
    /// Torque-weighted force regularization `J_st_j R_tau J_st_j^T`:
    /// minimizes joint torques, steering forces toward low-torque directions.
    TorqueMinimization,
}

/// Cost weights of the tracking term and the regularizers.
#[derive(Debug, Clone)]
pub struct QpWeights {
    /// 6x6 weight on the CoM wrench tracking error.
    pub q_wrench: Matrix6<f64>,
    /// Regularization on the generalized accelerations.
    pub r_qdd: f64,
    /// Regularization on the contact forces (robustness mode, and floor in
    /// torque-minimization mode).
    pub r_force: f64,
    /// Per-joint torque weights (torque-minimization mode).
    pub r_tau: [f64; NUM_JOINTS],
    pub mode: RegularizationMode,
}

impl Default for QpWeights {
    fn default() -> Self {
        QpWeights {
            q_wrench: Matrix6::identity() * 10.0,
            r_qdd: 1e-3,
            r_force: 1e-6,
            r_tau: [1e-6; NUM_JOINTS],
            mode: RegularizationMode::Robustness,
        }
    }
}

/// Slack softening of the swing rows.
#[derive(Debug, Clone, Copy)]
pub struct SlackConfig {
    pub enabled: bool,
    /// Weight on the squared slack norm; large relative to the tracking
    /// weights so violations appear only under conflicting constraints.
    pub alpha: f64,
}

impl Default for SlackConfig {
    fn default() -> Self {
        SlackConfig { enabled: true, alpha: 1e6 }
    }
}

impl SlackConfig {
    pub fn validate(&self) -> Result<(), QpError> {
        if self.enabled && self.alpha <= 0.0 {
            return Err(QpError::Invalid("slack weight alpha must be > 0".into()));
        }
        Ok(())
    }
}

/// Task targets consumed by the assembly.
#[derive(Debug, Clone)]
pub struct WbcTaskInputs {
    /// Desired CoM wrench.
    pub w_com_d: Vector6<f64>,
    /// Stance acceleration correction, stacked over stance legs (may be
    /// empty for a plain Assumption-1 stance constraint).
    pub vdot_st_d: DVector<f64>,
    /// Swing acceleration targets, stacked over swing legs.
    pub vdot_sw_d: DVector<f64>,
}

/// Cost Hessian and gradient: `|W_com - W_com_d|^2_Q + |u|^2_R (+ alpha
/// |eps|^2)` expanded around `G u = J_st_com^T F`.
pub fn build_cost(
    dyn_q: &DynamicsQuantities,
    w_com_d: &Vector6<f64>,
    weights: &QpWeights,
    slack: &SlackConfig,
    layout: &DecisionLayout,
) -> Result<(DMatrix<f64>, DVector<f64>), QpError> {
    let n = layout.dim();
    let n_st = layout.n_st();
    let mut g = DMatrix::zeros(6, n);
    g.view_mut((0, NV), (6, n_st)).copy_from(&dyn_q.j_st_com.transpose());

    let mut hessian = g.transpose() * weights.q_wrench * &g * 2.0;
    for i in 0..NV {
        hessian[(i, i)] += 2.0 * weights.r_qdd;
    }
    match weights.mode {
        RegularizationMode::Robustness => {
            for i in 0..n_st {
                hessian[(NV + i, NV + i)] += 2.0 * weights.r_force;
            }
        }
        RegularizationMode::TorqueMinimization => {
            let r_tau = DMatrix::from_diagonal(&DVector::from_iterator(
                NUM_JOINTS,
                weights.r_tau.iter().copied(),
            ));
            let r_kk = &dyn_q.j_st_j * r_tau * dyn_q.j_st_j.transpose();
            for r in 0..n_st {
                for c in 0..n_st {
                    hessian[(NV + r, NV + c)] += 2.0 * r_kk[(r, c)];
                }
                hessian[(NV + r, NV + r)] += 2.0 * weights.r_force;
            }
        }
    }
    for i in 0..layout.n_slack() {
        let k = layout.slack_offset() + i;
        hessian[(k, k)] += 2.0 * slack.alpha;
    }
    let hessian = (&hessian + hessian.transpose()) * 0.5;

    // reject indefinite costs up front
    if hessian.clone().cholesky().is_none() {
        return Err(QpError::NotConvex("cost Hessian is not positive definite".into()));
    }

    let mut w6 = DVector::zeros(6);
    for i in 0..6 {
        w6[i] = w_com_d[i];
    }
    let gradient = -(g.transpose() * weights.q_wrench * w6) * 2.0;
    Ok((hessian, gradient))
}

/// Physical-consistency rows: the unactuated dynamics as an equality,
/// `[M_com 0 -J_st_com^T] u = -h_com`.
pub fn build_physical_consistency(
    dyn_q: &DynamicsQuantities,
    layout: &DecisionLayout,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = layout.dim();
    let mut a = DMatrix::zeros(6, n);
    for r in 0..6 {
        for c in 0..6 {
            a[(r, c)] = dyn_q.m_com[(r, c)];
        }
    }
    a.view_mut((0, NV), (6, layout.n_st()))
        .copy_from(&(-dyn_q.j_st_com.transpose()));
    let b = DVector::from_iterator(6, (0..6).map(|i| -dyn_q.h_com[i]));
    (a, b)
}

/// Stance rows at the acceleration level: `J_st qddot = -Jdot_st v +
/// vdot_st_d` (zero target reproduces the no-motion stance condition).
pub fn build_stance_rows(
    dyn_q: &DynamicsQuantities,
    vdot_st_d: &DVector<f64>,
    layout: &DecisionLayout,
) -> Result<(DMatrix<f64>, DVector<f64>), QpError> {
    let n_st = layout.n_st();
    if vdot_st_d.len() != n_st && !vdot_st_d.is_empty() {
        return Err(QpError::Dimension(format!(
            "stance target has {} entries, expected {n_st} or 0",
            vdot_st_d.len()
        )));
    }
    let n = layout.dim();
    let mut a = DMatrix::zeros(n_st, n);
    a.view_mut((0, 0), (n_st, NV)).copy_from(&dyn_q.j_st);
    let mut b = -dyn_q.jdot_v_st.clone();
    if !vdot_st_d.is_empty() {
        b += vdot_st_d;
    }
    Ok((a, b))
}

/// Swing rows. Without slacks they are hard equalities `J_sw qddot =
/// vdot_sw_d - Jdot_sw v`; with slacks each direction gets the two-sided
/// band `-eps <= J_sw u - b_sw <= eps` plus `eps >= 0`.
#[allow(clippy::type_complexity)]
pub fn build_swing_rows(
    dyn_q: &DynamicsQuantities,
    vdot_sw_d: &DVector<f64>,
    slack: &SlackConfig,
    layout: &DecisionLayout,
) -> Result<SwingRows, QpError> {
    slack.validate()?;
    let n_sw = layout.n_sw();
    if vdot_sw_d.len() != n_sw {
        return Err(QpError::Dimension(format!(
            "swing target has {} entries, expected {n_sw}",
            vdot_sw_d.len()
        )));
    }
    let n = layout.dim();
    let b_sw = vdot_sw_d - &dyn_q.jdot_v_sw;

    if !slack.enabled || n_sw == 0 {
        let mut a = DMatrix::zeros(n_sw, n);
        a.view_mut((0, 0), (n_sw, NV)).copy_from(&dyn_q.j_sw);
        return Ok(SwingRows::Equalities { a, b: b_sw });
    }

    // band rows (2 per direction) then nonnegativity rows
    let mut c = DMatrix::zeros(3 * n_sw, n);
    let mut d_lo = DVector::from_element(3 * n_sw, f64::NEG_INFINITY);
    let mut d_hi = DVector::from_element(3 * n_sw, f64::INFINITY);
    let mut provenance = Vec::with_capacity(3 * n_sw);
    let s0 = layout.slack_offset();
    for k in 0..n_sw {
        let upper = 2 * k;
        let lower = 2 * k + 1;
        for col in 0..NV {
            c[(upper, col)] = dyn_q.j_sw[(k, col)];
            c[(lower, col)] = dyn_q.j_sw[(k, col)];
        }
        c[(upper, s0 + k)] = -1.0;
        d_hi[upper] = b_sw[k];
        provenance.push(ConstraintFamily::SlackBand);
        c[(lower, s0 + k)] = 1.0;
        d_lo[lower] = b_sw[k];
        provenance.push(ConstraintFamily::SlackBand);
    }
    for k in 0..n_sw {
        let row = 2 * n_sw + k;
        c[(row, s0 + k)] = 1.0;
        d_lo[row] = 0.0;
        provenance.push(ConstraintFamily::SlackNonneg);
    }
    Ok(SwingRows::Inequalities { c, d_lo, d_hi, provenance })
}

/// Output of [`build_swing_rows`].
pub enum SwingRows {
    Equalities { a: DMatrix<f64>, b: DVector<f64> },
    Inequalities { c: DMatrix<f64>, d_lo: DVector<f64>, d_hi: DVector<f64>, provenance: Vec<ConstraintFamily> },
}

/// Friction rows: inscribed square pyramid (4 one-sided rows) plus the
/// normal-force bounds, per stance foot, in the terrain-normal frame.
#[allow(clippy::type_complexity)]
pub fn build_friction_rows(
    contacts: &ContactState,
    layout: &DecisionLayout,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>), QpError> {
    let stance = &layout.stance_legs;
    let rows = 5 * stance.len();
    let n = layout.dim();
    let mut c = DMatrix::zeros(rows, n);
    let mut d_lo = DVector::from_element(rows, f64::NEG_INFINITY);
    let mut d_hi = DVector::from_element(rows, f64::INFINITY);

    for (k, &leg) in stance.iter().enumerate() {
        let contact = &contacts.legs[leg];
        let normal = contact.normal;
        if (normal.norm() - 1.0).abs() > 1e-9 {
            return Err(QpError::Invalid(format!("leg {leg}: contact normal is not unit length")));
        }
        let (t1, t2) = tangent_basis(&normal);
        let bound = contact.mu / std::f64::consts::SQRT_2;
        let col0 = layout.force_offset() + 3 * k;
        let mut set_row = |row: usize, dir: nalgebra::Vector3<f64>, lo: f64, hi: f64| {
            for i in 0..3 {
                c[(row, col0 + i)] = dir[i];
            }
            d_lo[row] = lo;
            d_hi[row] = hi;
        };
        let base = 5 * k;
        set_row(base, t1 - bound * normal, f64::NEG_INFINITY, 0.0);
        set_row(base + 1, t1 + bound * normal, 0.0, f64::INFINITY);
        set_row(base + 2, t2 - bound * normal, f64::NEG_INFINITY, 0.0);
        set_row(base + 3, t2 + bound * normal, 0.0, f64::INFINITY);
        set_row(base + 4, normal, contact.f_min, contact.f_max);
    }
    Ok((c, d_lo, d_hi))
}

/// Torque-limit rows through the actuated dynamics:
/// `-h_j + tau_min <= M_j qddot_j - J_st_j^T F <= -h_j + tau_max`.
#[allow(clippy::type_complexity)]
pub fn build_torque_rows(
    dyn_q: &DynamicsQuantities,
    tau_min: &[f64; NUM_JOINTS],
    tau_max: &[f64; NUM_JOINTS],
    layout: &DecisionLayout,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>), QpError> {
    for i in 0..NUM_JOINTS {
        if tau_min[i] >= tau_max[i] {
            return Err(QpError::Invalid(format!(
                "joint {i}: tau_min {} >= tau_max {}",
                tau_min[i], tau_max[i]
            )));
        }
    }
    let n = layout.dim();
    let mut c = DMatrix::zeros(NUM_JOINTS, n);
    c.view_mut((0, 6), (NUM_JOINTS, NUM_JOINTS)).copy_from(&dyn_q.m_j);
    c.view_mut((0, NV), (NUM_JOINTS, layout.n_st()))
        .copy_from(&(-dyn_q.j_st_j.transpose()));
    let mut d_lo = DVector::zeros(NUM_JOINTS);
    let mut d_hi = DVector::zeros(NUM_JOINTS);
    for i in 0..NUM_JOINTS {
        d_lo[i] = -dyn_q.h_j[i] + tau_min[i];
        d_hi[i] = -dyn_q.h_j[i] + tau_max[i];
    }
    Ok((c, d_lo, d_hi))
}

/// Joint-acceleration bounds that bring each joint to its end-stop with zero
/// velocity over `Delta t = 10 dt`.
#[allow(clippy::type_complexity)]
pub fn build_kinematic_rows(
    q: &SVector<f64, NUM_JOINTS>,
    dq: &SVector<f64, NUM_JOINTS>,
    q_min: &[f64; NUM_JOINTS],
    q_max: &[f64; NUM_JOINTS],
    dt: f64,
    layout: &DecisionLayout,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>), QpError> {
    if dt <= 0.0 {
        return Err(QpError::Invalid("dt must be > 0".into()));
    }
    let horizon = 10.0 * dt;
    let scale = 2.0 / (horizon * horizon);
    let n = layout.dim();
    let mut c = DMatrix::zeros(NUM_JOINTS, n);
    let mut d_lo = DVector::zeros(NUM_JOINTS);
    let mut d_hi = DVector::zeros(NUM_JOINTS);
    for i in 0..NUM_JOINTS {
        c[(i, 6 + i)] = 1.0;
        d_lo[i] = scale * (q_min[i] - q[i] - horizon * dq[i]);
        d_hi[i] = scale * (q_max[i] - q[i] - horizon * dq[i]);
    }
    Ok((c, d_lo, d_hi))
}

/// Assemble the complete whole-body QP for one control tick.
#[allow(clippy::too_many_arguments)]
pub fn build_wbc_problem(
    dyn_q: &DynamicsQuantities,
    contacts: &ContactState,
    tasks: &WbcTaskInputs,
    q: &SVector<f64, NUM_JOINTS>,
    dq: &SVector<f64, NUM_JOINTS>,
    q_min: &[f64; NUM_JOINTS],
    q_max: &[f64; NUM_JOINTS],
    tau_min: &[f64; NUM_JOINTS],
    tau_max: &[f64; NUM_JOINTS],
    dt: f64,
    weights: &QpWeights,
    slack: &SlackConfig,
) -> Result<QpProblem, QpError> {
    let layout = DecisionLayout {
        stance_legs: dyn_q.stance_legs.clone(),
        swing_legs: dyn_q.swing_legs.clone(),
        slacks_enabled: slack.enabled && dyn_q.n_sw() > 0,
    };
    let n = layout.dim();

    let (hessian, gradient) = build_cost(dyn_q, &tasks.w_com_d, weights, slack, &layout)?;
    let (a_p, b_p) = build_physical_consistency(dyn_q, &layout);
    let (a_st, b_st) = build_stance_rows(dyn_q, &tasks.vdot_st_d, &layout)?;
    let swing = build_swing_rows(dyn_q, &tasks.vdot_sw_d, slack, &layout)?;
    let (c_fr, fr_lo, fr_hi) = build_friction_rows(contacts, &layout)?;
    let (c_kin, kin_lo, kin_hi) = build_kinematic_rows(q, dq, q_min, q_max, dt, &layout)?;
    let (c_tau, tau_lo, tau_hi) = build_torque_rows(dyn_q, tau_min, tau_max, &layout)?;

    // stack equalities [A_p; A_st (; A_sw)]
    let mut a_sw: Option<(DMatrix<f64>, DVector<f64>)> = None;
    let mut c_slack: Option<(DMatrix<f64>, DVector<f64>, DVector<f64>, Vec<ConstraintFamily>)> = None;
    match swing {
        SwingRows::Equalities { a, b } => a_sw = Some((a, b)),
        SwingRows::Inequalities { c, d_lo, d_hi, provenance } => c_slack = Some((c, d_lo, d_hi, provenance)),
    }
    let n_eq = 6 + a_st.nrows() + a_sw.as_ref().map(|(a, _)| a.nrows()).unwrap_or(0);
    let mut a_eq = DMatrix::zeros(n_eq, n);
    let mut b_eq = DVector::zeros(n_eq);
    let mut eq_provenance = Vec::with_capacity(n_eq);
    a_eq.view_mut((0, 0), (6, n)).copy_from(&a_p);
    b_eq.rows_mut(0, 6).copy_from(&b_p);
    eq_provenance.extend(std::iter::repeat(ConstraintFamily::PhysicalConsistency).take(6));
    a_eq.view_mut((6, 0), (a_st.nrows(), n)).copy_from(&a_st);
    b_eq.rows_mut(6, a_st.nrows()).copy_from(&b_st);
    eq_provenance.extend(std::iter::repeat(ConstraintFamily::Stance).take(a_st.nrows()));
    if let Some((a_sw, b_sw)) = &a_sw {
        let r0 = 6 + a_st.nrows();
        a_eq.view_mut((r0, 0), (a_sw.nrows(), n)).copy_from(a_sw);
        b_eq.rows_mut(r0, a_sw.nrows()).copy_from(b_sw);
        eq_provenance.extend(std::iter::repeat(ConstraintFamily::Swing).take(a_sw.nrows()));
    }

    // stack inequalities [C_fr; C_kin; C_tau; slack rows]
    let slack_rows = c_slack.as_ref().map(|(c, _, _, _)| c.nrows()).unwrap_or(0);
    let n_ineq = c_fr.nrows() + NUM_JOINTS * 2 + slack_rows;
    let mut c_ineq = DMatrix::zeros(n_ineq, n);
    let mut d_lo = DVector::zeros(n_ineq);
    let mut d_hi = DVector::zeros(n_ineq);
    let mut ineq_provenance = Vec::with_capacity(n_ineq);
    let mut r0 = 0;
    let mut push_block =
        |c: &DMatrix<f64>, lo: &DVector<f64>, hi: &DVector<f64>, fams: &dyn Fn(usize) -> ConstraintFamily,
         c_ineq: &mut DMatrix<f64>, d_lo: &mut DVector<f64>, d_hi: &mut DVector<f64>,
         ineq_provenance: &mut Vec<ConstraintFamily>| {
            c_ineq.view_mut((r0, 0), (c.nrows(), n)).copy_from(c);
            d_lo.rows_mut(r0, c.nrows()).copy_from(lo);
            d_hi.rows_mut(r0, c.nrows()).copy_from(hi);
            for k in 0..c.nrows() {
                ineq_provenance.push(fams(k));
            }
            r0 += c.nrows();
        };
    push_block(&c_fr, &fr_lo, &fr_hi, &|_| ConstraintFamily::Friction, &mut c_ineq, &mut d_lo, &mut d_hi, &mut ineq_provenance);
    push_block(&c_kin, &kin_lo, &kin_hi, &|_| ConstraintFamily::KinematicLimit, &mut c_ineq, &mut d_lo, &mut d_hi, &mut ineq_provenance);
    push_block(&c_tau, &tau_lo, &tau_hi, &|_| ConstraintFamily::TorqueLimit, &mut c_ineq, &mut d_lo, &mut d_hi, &mut ineq_provenance);
    if let Some((c, lo, hi, provenance)) = &c_slack {
        let prov = provenance.clone();
        push_block(c, lo, hi, &move |k| prov[k], &mut c_ineq, &mut d_lo, &mut d_hi, &mut ineq_provenance);
    }

    let problem = QpProblem {
        hessian,
        gradient,
        a_eq,
        b_eq,
        c_ineq,
        d_lo,
        d_hi,
        eq_provenance,
        ineq_provenance,
        layout,
    };
    problem.validate()?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{compute_dynamics, ContactState, LegContact, RobotModel, RobotState};
    use crate::qp::{ConstraintFamily, QpSolver, SolveStatus};
    use crate::GRAVITY;
    use approx::assert_relative_eq;
    use nalgebra::{UnitQuaternion, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn standing_setup() -> (RobotModel, RobotState, ContactState, DynamicsQuantities) {
        let model = RobotModel::desk_hyq();
        let q = model.standing_pose(0.5);
        let kin = crate::model::full_kinematics(
            &model,
            &nalgebra::Rotation3::identity(),
            &Vector3::zeros(),
            &Vector3::zeros(),
            &Vector3::zeros(),
            &q,
            &nalgebra::SVector::zeros(),
        );
        let state = RobotState {
            orientation: UnitQuaternion::identity(),
            x_com: kin.com + Vector3::new(0.0, 0.0, 0.5),
            xdot_com: Vector3::zeros(),
            omega_b: Vector3::zeros(),
            q,
            dq: nalgebra::SVector::zeros(),
        };
        let kin = crate::model::kinematics_from_state(&model, &state).unwrap();
        let contacts = ContactState::all_stance(
            [kin.feet[0].pos, kin.feet[1].pos, kin.feet[2].pos, kin.feet[3].pos],
            Vector3::z(),
            0.7,
        );
        let dyn_q = compute_dynamics(&model, &state, &contacts).unwrap();
        (model, state, contacts, dyn_q)
    }

    fn standing_problem(
        weights: &QpWeights,
        slack: &SlackConfig,
    ) -> (RobotModel, RobotState, ContactState, DynamicsQuantities, QpProblem) {
        let (model, state, contacts, dyn_q) = standing_setup();
        let mut w_com_d = Vector6::zeros();
        w_com_d[2] = model.total_mass() * GRAVITY;
        let tasks = WbcTaskInputs {
            w_com_d,
            vdot_st_d: DVector::zeros(dyn_q.n_st()),
            vdot_sw_d: DVector::zeros(dyn_q.n_sw()),
        };
        let (tau_min, tau_max) = model.torque_bounds(&state.q);
        let problem = build_wbc_problem(
            &dyn_q, &contacts, &tasks, &state.q, &state.dq, &model.q_min, &model.q_max, &tau_min, &tau_max,
            0.004, weights, slack,
        )
        .unwrap();
        (model, state, contacts, dyn_q, problem)
    }

    #[test]
    fn cost_matches_symbolic_expansion() {
        // 1/2 u^T P u + q^T u  must equal  |G u - g0|^2_Q + |u|^2_R - |g0|^2_Q
        let (_, _, _, dyn_q) = standing_setup();
        let weights = QpWeights::default();
        let slack = SlackConfig { enabled: false, alpha: 1e6 };
        let layout = DecisionLayout {
            stance_legs: dyn_q.stance_legs.clone(),
            swing_legs: dyn_q.swing_legs.clone(),
            slacks_enabled: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w_com_d = Vector6::from_fn(|_, _| rng.gen_range(-100.0..100.0));
        let (p, q) = build_cost(&dyn_q, &w_com_d, &weights, &slack, &layout).unwrap();

        for _ in 0..20 {
            let u = DVector::from_fn(layout.dim(), |_, _| rng.gen_range(-10.0..10.0));
            let quad = 0.5 * u.dot(&(&p * &u)) + q.dot(&u);

            // direct evaluation of the quadratic forms
            let f = u.rows(NV, layout.n_st()).into_owned();
            let w = dyn_q.j_st_com.transpose() * &f;
            let dw = &w - DVector::from_iterator(6, (0..6).map(|i| w_com_d[i]));
            let track = dw.dot(&(nalgebra::DMatrix::from_fn(6, 6, |r, c| weights.q_wrench[(r, c)]) * &dw));
            let reg = weights.r_qdd * u.rows(0, NV).norm_squared() + weights.r_force * f.norm_squared();
            let g0 = DVector::from_iterator(6, (0..6).map(|i| w_com_d[i]));
            let const_term = g0.dot(&(nalgebra::DMatrix::from_fn(6, 6, |r, c| weights.q_wrench[(r, c)]) * &g0));
            assert_relative_eq!(quad, track + reg - const_term, epsilon = 1e-9 * (1.0 + quad.abs()));
        }
    }

    #[test]
    fn standing_qp_distributes_weight_vertically() {
        let (model, _, _, dyn_q, problem) = standing_problem(&QpWeights::default(), &SlackConfig::default());
        let solver = QpSolver::default();
        let warm = static_feasible_point(&problem, &dyn_q, &ContactState::all_stance(
            dyn_q.foot_pos,
            Vector3::z(),
            0.7,
        ));
        assert!(warm.is_some(), "static stance must be feasible");
        let sol = solver.solve(&problem, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);

        let f = sol.forces(&problem);
        let mg = model.total_mass() * GRAVITY;
        let mut total_vertical = 0.0;
        for l in 0..4 {
            total_vertical += f[3 * l + 2];
            // near-zero tangential forces in symmetric standing
            assert!(f[3 * l].abs() < 2.0, "tangential x {}", f[3 * l]);
            assert!(f[3 * l + 1].abs() < 2.0, "tangential y {}", f[3 * l + 1]);
        }
        assert_relative_eq!(total_vertical, mg, epsilon = 0.5);
        // accelerations essentially zero at the static optimum
        assert!(sol.qddot().amax() < 0.05);
    }

    #[test]
    fn physical_consistency_static_and_random_residual() {
        let (_, _, _, dyn_q, problem) = standing_problem(&QpWeights::default(), &SlackConfig::default());
        let layout = &problem.layout;
        let (a_p, b_p) = build_physical_consistency(&dyn_q, layout);

        // static stance: qddot = 0, symmetric vertical forces
        let mut u = DVector::zeros(layout.dim());
        let mg = dyn_q.total_mass * GRAVITY;
        for l in 0..4 {
            u[layout.force_offset() + 3 * l + 2] = mg / 4.0;
        }
        let resid = &a_p * &u - &b_p;
        assert!(resid.amax() < 1e-9, "static residual {}", resid.amax());

        // random u: residual equals M_com vdot + h_com - J^T F recomputed independently
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let u = DVector::from_fn(layout.dim(), |_, _| rng.gen_range(-5.0..5.0));
            let resid = &a_p * &u - &b_p;
            let vdot6 = Vector6::from_iterator((0..6).map(|i| u[i]));
            let f = u.rows(layout.force_offset(), layout.n_st()).into_owned();
            let oracle = dyn_q.m_com * vdot6 + dyn_q.h_com
                - Vector6::from_column_slice((dyn_q.j_st_com.transpose() * f).as_slice());
            for i in 0..6 {
                assert_relative_eq!(resid[i], oracle[i], epsilon = 1e-9);
            }
        }

        // no swing-force columns exist: width is exactly 18 + n_st + slacks
        assert_eq!(a_p.ncols(), NV + layout.n_st() + layout.n_slack());
    }

    #[test]
    fn stance_rows_zero_velocity_zero_target() {
        let (_, _, _, dyn_q, problem) = standing_problem(&QpWeights::default(), &SlackConfig::default());
        let (_, b_st) = build_stance_rows(&dyn_q, &DVector::zeros(12), &problem.layout).unwrap();
        assert!(b_st.amax() < 1e-12);

        // nonzero stance correction lands in b
        let target = DVector::from_fn(12, |i, _| 0.1 * i as f64);
        let (_, b2) = build_stance_rows(&dyn_q, &target, &problem.layout).unwrap();
        for i in 0..12 {
            assert_relative_eq!(b2[i], -dyn_q.jdot_v_st[i] + target[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn swing_rows_empty_without_swing_legs() {
        let (_, _, _, dyn_q, problem) = standing_problem(&QpWeights::default(), &SlackConfig::default());
        match build_swing_rows(&dyn_q, &DVector::zeros(0), &SlackConfig::default(), &problem.layout).unwrap() {
            SwingRows::Equalities { a, b } => {
                assert_eq!(a.nrows(), 0);
                assert_eq!(b.len(), 0);
            }
            SwingRows::Inequalities { .. } => panic!("no swing legs must yield zero rows"),
        }
    }

    fn three_stance_setup() -> (RobotModel, RobotState, ContactState, DynamicsQuantities) {
        let (model, state, mut contacts, _) = standing_setup();
        contacts.legs[1] = LegContact::swing(); // RF in swing
        let dyn_q = compute_dynamics(&model, &state, &contacts).unwrap();
        (model, state, contacts, dyn_q)
    }

    #[test]
    fn slack_stays_zero_when_unconstrained() {
        let (model, state, contacts, dyn_q) = three_stance_setup();
        let mut w_com_d = Vector6::zeros();
        w_com_d[2] = model.total_mass() * GRAVITY;
        let tasks = WbcTaskInputs {
            w_com_d,
            vdot_st_d: DVector::zeros(dyn_q.n_st()),
            vdot_sw_d: DVector::from_vec(vec![0.5, -0.2, 1.0]),
        };
        let (tau_min, tau_max) = model.torque_bounds(&state.q);
        let slack = SlackConfig { enabled: true, alpha: 1e6 };
        let problem = build_wbc_problem(
            &dyn_q, &contacts, &tasks, &state.q, &state.dq, &model.q_min, &model.q_max, &tau_min, &tau_max,
            0.004, &QpWeights::default(), &slack,
        )
        .unwrap();
        let sol = QpSolver::default().solve(&problem, None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let eps = sol.slacks(&problem);
        assert_eq!(eps.len(), 3);
        assert!(eps.amax() <= 1e-8, "slack should be zero when feasible: {eps}");
        // slacks never dip below the numerical floor
        assert!(eps.min() >= -1e-9);

        // swing acceleration achieved: J_sw qddot + Jdot v = vdot_sw_d
        let achieved = &dyn_q.j_sw * sol.qddot() + &dyn_q.jdot_v_sw;
        for i in 0..3 {
            assert_relative_eq!(achieved[i], tasks.vdot_sw_d[i], epsilon = 1e-6);
        }

        // identical minimizer with slacks disabled on this non-conflicting instance
        let hard = SlackConfig { enabled: false, alpha: 1e6 };
        let problem_hard = build_wbc_problem(
            &dyn_q, &contacts, &tasks, &state.q, &state.dq, &model.q_min, &model.q_max, &tau_min, &tau_max,
            0.004, &QpWeights::default(), &hard,
        )
        .unwrap();
        let sol_hard = QpSolver::default().solve(&problem_hard, None).unwrap();
        assert_eq!(sol_hard.status, SolveStatus::Optimal);
        for i in 0..problem_hard.n() {
            assert_relative_eq!(sol.x[i], sol_hard.x[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn friction_rows_pyramid_geometry() {
        let (_, _, contacts, dyn_q) = standing_setup();
        let layout = DecisionLayout {
            stance_legs: dyn_q.stance_legs.clone(),
            swing_legs: vec![],
            slacks_enabled: false,
        };
        let (c, d_lo, d_hi) = build_friction_rows(&contacts, &layout).unwrap();
        assert_eq!(c.nrows(), 20);

        // vertical 100 N on flat ground: all pyramid rows hold with margin mu*100/sqrt(2)
        let mut u = DVector::zeros(layout.dim());
        for l in 0..4 {
            u[layout.force_offset() + 3 * l + 2] = 100.0;
        }
        let vals = &c * &u;
        let margin = 0.7 * 100.0 / std::f64::consts::SQRT_2;
        for foot in 0..4 {
            for r in 0..4 {
                let row = 5 * foot + r;
                let m = (d_hi[row] - vals[row]).min(vals[row] - d_lo[row]);
                assert_relative_eq!(m, margin, epsilon = 1e-9);
            }
            let row = 5 * foot + 4;
            assert_relative_eq!(vals[row], 100.0, epsilon = 1e-12);
        }

        // tangential force beyond the pyramid violates at least one row
        u[layout.force_offset()] = 0.7 * 100.0; // full mu*fn along x exceeds mu*fn/sqrt(2)
        let vals = &c * &u;
        let violated = (0..c.nrows()).any(|r| vals[r] < d_lo[r] - 1e-12 || vals[r] > d_hi[r] + 1e-12);
        assert!(violated);
    }

    #[test]
    fn friction_rows_rotate_with_terrain_normal() {
        // a force along a 30-degree slope normal is feasible there but the
        // same force violates the pyramid built for flat ground
        let (_, _, mut contacts, dyn_q) = standing_setup();
        let ang = 30f64.to_radians();
        let slope_normal = Vector3::new(-ang.sin(), 0.0, ang.cos());
        for leg in &mut contacts.legs {
            leg.normal = slope_normal;
        }
        let layout = DecisionLayout {
            stance_legs: dyn_q.stance_legs.clone(),
            swing_legs: vec![],
            slacks_enabled: false,
        };
        let (c_slope, lo_s, hi_s) = build_friction_rows(&contacts, &layout).unwrap();

        let mut u = DVector::zeros(layout.dim());
        for l in 0..4 {
            for i in 0..3 {
                u[layout.force_offset() + 3 * l + i] = 100.0 * slope_normal[i];
            }
        }
        let vals = &c_slope * &u;
        for r in 0..c_slope.nrows() {
            assert!(vals[r] >= lo_s[r] - 1e-9 && vals[r] <= hi_s[r] + 1e-9, "row {r} infeasible on slope");
        }

        for leg in &mut contacts.legs {
            leg.normal = Vector3::z();
        }
        let (c_flat, lo_f, hi_f) = build_friction_rows(&contacts, &layout).unwrap();
        let vals = &c_flat * &u;
        let violated = (0..c_flat.nrows()).any(|r| vals[r] < lo_f[r] - 1e-9 || vals[r] > hi_f[r] + 1e-9);
        assert!(violated, "slope-aligned force must leave the flat-ground pyramid");
    }

    #[test]
    fn friction_rejects_non_unit_normal() {
        let (_, _, mut contacts, dyn_q) = standing_setup();
        contacts.legs[0].normal = Vector3::new(0.0, 0.0, 1.5);
        let layout = DecisionLayout {
            stance_legs: dyn_q.stance_legs.clone(),
            swing_legs: vec![],
            slacks_enabled: false,
        };
        assert!(build_friction_rows(&contacts, &layout).is_err());
    }

    #[test]
    fn torque_rows_match_torque_map_oracle() {
        // C_tau u + h_j equals the actuated-dynamics torque recomputed
        // independently, for random u
        let (_, _, _, dyn_q, problem) = standing_problem(&QpWeights::default(), &SlackConfig::default());
        let layout = &problem.layout;
        let (c, d_lo, d_hi) = build_torque_rows(&dyn_q, &[-120.0; 12], &[120.0; 12], layout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..10 {
            let u = DVector::from_fn(layout.dim(), |_, _| rng.gen_range(-3.0..3.0));
            let qddot_j = u.rows(6, NUM_JOINTS).into_owned();
            let f = u.rows(layout.force_offset(), layout.n_st()).into_owned();
            let tau_oracle = &dyn_q.m_j * qddot_j + &dyn_q.h_j - dyn_q.j_st_j.transpose() * f;
            let vals = &c * &u;
            for i in 0..NUM_JOINTS {
                assert_relative_eq!(vals[i] + dyn_q.h_j[i], tau_oracle[i], epsilon = 1e-10);
            }
        }
        for i in 0..NUM_JOINTS {
            assert_relative_eq!(d_lo[i], -dyn_q.h_j[i] - 120.0, epsilon = 1e-12);
            assert_relative_eq!(d_hi[i], -dyn_q.h_j[i] + 120.0, epsilon = 1e-12);
        }

        // inverted bounds rejected
        let mut bad_lo = [-120.0; 12];
        bad_lo[5] = 200.0;
        assert!(build_torque_rows(&dyn_q, &bad_lo, &[120.0; 12], layout).is_err());
    }

    #[test]
    fn kinematic_bounds_plug_in_values() {
        let (model, _, _, dyn_q, problem) = standing_problem(&QpWeights::default(), &SlackConfig::default());
        let _ = dyn_q;
        let layout = &problem.layout;
        let dt = 0.004;
        let horizon = 10.0 * dt;

        // mid-range joint at rest: bound magnitude 2*(range/2)/horizon^2
        let mut q = nalgebra::SVector::<f64, NUM_JOINTS>::zeros();
        for i in 0..NUM_JOINTS {
            q[i] = 0.5 * (model.q_min[i] + model.q_max[i]);
        }
        let dq = nalgebra::SVector::zeros();
        let (_, d_lo, d_hi) = build_kinematic_rows(&q, &dq, &model.q_min, &model.q_max, dt, layout).unwrap();
        for i in 0..NUM_JOINTS {
            let half_range = 0.5 * (model.q_max[i] - model.q_min[i]);
            assert_relative_eq!(d_hi[i], 2.0 * half_range / (horizon * horizon), epsilon = 1e-9);
            assert_relative_eq!(d_lo[i], -2.0 * half_range / (horizon * horizon), epsilon = 1e-9);
        }

        // at the upper end-stop with zero velocity the joint cannot accelerate further
        let mut q_top = q;
        q_top[4] = model.q_max[4];
        let (_, _, d_hi) = build_kinematic_rows(&q_top, &dq, &model.q_min, &model.q_max, dt, layout).unwrap();
        assert_relative_eq!(d_hi[4], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn torque_weighted_regularization_tilts_grfs_toward_knee() {
        // raising the KFE torque weight must reduce the knee torque and tilt
        // the ground reaction forces away from vertical
        let (model, state, contacts, dyn_q) = standing_setup();
        let mut w_com_d = Vector6::zeros();
        w_com_d[2] = model.total_mass() * GRAVITY;
        let tasks = WbcTaskInputs {
            w_com_d,
            vdot_st_d: DVector::zeros(12),
            vdot_sw_d: DVector::zeros(0),
        };
        let (tau_min, tau_max) = model.torque_bounds(&state.q);
        let slack = SlackConfig { enabled: false, alpha: 1e6 };

        let solve_mode = |weights: &QpWeights| {
            let problem = build_wbc_problem(
                &dyn_q, &contacts, &tasks, &state.q, &state.dq, &model.q_min, &model.q_max, &tau_min,
                &tau_max, 0.004, weights, &slack,
            )
            .unwrap();
            let sol = QpSolver::default().solve(&problem, None).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            let f = sol.forces(&problem);
            let qddot_j = sol.x.rows(6, NUM_JOINTS).into_owned();
            let tau = &dyn_q.m_j * qddot_j + &dyn_q.h_j - dyn_q.j_st_j.transpose() * &f;
            (f, tau)
        };

        let plain = QpWeights::default();
        let (f_plain, tau_plain) = solve_mode(&plain);

        let mut knee_heavy = QpWeights { mode: RegularizationMode::TorqueMinimization, ..QpWeights::default() };
        for l in 0..4 {
            knee_heavy.r_tau[3 * l + 2] = 5e-3; // strong KFE preference
        }
        let (f_knee, tau_knee) = solve_mode(&knee_heavy);

        let knee_torque = |tau: &DVector<f64>| (0..4).map(|l| tau[3 * l + 2].abs()).sum::<f64>();
        assert!(
            knee_torque(&tau_knee) < 0.7 * knee_torque(&tau_plain),
            "knee torques should drop: {} vs {}",
            knee_torque(&tau_knee),
            knee_torque(&tau_plain)
        );

        // direction check: tangential component grows relative to vertical
        let tilt = |f: &DVector<f64>| {
            (0..4)
                .map(|l| {
                    let t = (f[3 * l].powi(2) + f[3 * l + 1].powi(2)).sqrt();
                    t / f[3 * l + 2].max(1.0)
                })
                .sum::<f64>()
        };
        assert!(tilt(&f_knee) > tilt(&f_plain) + 1e-3, "GRFs should tilt toward the knee axis");
    }

    #[test]
    fn provenance_partitions_every_row() {
        let (_, _, _, dyn_q, problem) = standing_problem(&QpWeights::default(), &SlackConfig::default());
        assert_eq!(problem.n_eq(), 6 + dyn_q.n_st());
        assert_eq!(problem.eq_provenance.len(), problem.n_eq());
        assert_eq!(problem.ineq_provenance.len(), problem.n_ineq());
        // friction (5 per stance foot) + kinematic (12) + torque (12)
        assert_eq!(problem.n_ineq(), 5 * 4 + 12 + 12);
        let count = |fam: ConstraintFamily| problem.ineq_provenance.iter().filter(|f| **f == fam).count();
        assert_eq!(count(ConstraintFamily::Friction), 20);
        assert_eq!(count(ConstraintFamily::KinematicLimit), 12);
        assert_eq!(count(ConstraintFamily::TorqueLimit), 12);

        // with one swing leg and slacks on: extra eq stance rows drop to 9
        // and slack rows appear
        let (model, state, contacts, dyn_q) = three_stance_setup();
        let tasks = WbcTaskInputs {
            w_com_d: Vector6::zeros(),
            vdot_st_d: DVector::zeros(9),
            vdot_sw_d: DVector::zeros(3),
        };
        let (tau_min, tau_max) = model.torque_bounds(&state.q);
        let p2 = build_wbc_problem(
            &dyn_q, &contacts, &tasks, &state.q, &state.dq, &model.q_min, &model.q_max, &tau_min, &tau_max,
            0.004, &QpWeights::default(), &SlackConfig::default(),
        )
        .unwrap();
        assert_eq!(p2.n_eq(), 6 + 9);
        assert_eq!(p2.n_ineq(), 5 * 3 + 12 + 12 + 3 * 3);
        let count2 = |fam: ConstraintFamily| p2.ineq_provenance.iter().filter(|f| **f == fam).count();
        assert_eq!(count2(ConstraintFamily::SlackBand), 6);
        assert_eq!(count2(ConstraintFamily::SlackNonneg), 3);
        assert_eq!(p2.n(), NV + 9 + 3);
    }

    #[test]
    fn static_feasible_point_satisfies_all_rows() {
        let (_, _, contacts, dyn_q, problem) = standing_problem(&QpWeights::default(), &SlackConfig::default());
        let u = static_feasible_point(&problem, &dyn_q, &contacts).expect("standing is feasible");
        assert!(problem.max_violation(&u) <= 1e-7);
        // pyramid-interior forces: strictly positive normal components
        for l in 0..4 {
            assert!(u[problem.layout.force_offset() + 3 * l + 2] > 2.0);
        }
    }
}

/// A feasible static-stance decision vector: zero accelerations and a
/// weight-supporting force distribution inside the pyramids. Returns `None`
/// when the static wrench cannot be realized within the constraints.
pub fn static_feasible_point(problem: &QpProblem, dyn_q: &DynamicsQuantities, contacts: &ContactState) -> Option<DVector<f64>> {
    let n_st = problem.layout.n_st();
    if n_st == 0 {
        return None;
    }
    // prior: per-foot share of the weight along the contact normal
    let mut f0 = DVector::zeros(n_st);
    let share = dyn_q.total_mass * crate::GRAVITY / problem.layout.stance_legs.len() as f64;
    for (k, &leg) in problem.layout.stance_legs.iter().enumerate() {
        let normal = contacts.legs[leg].normal;
        let scale = share / normal.z.max(0.3);
        for i in 0..3 {
            f0[3 * k + i] = scale * normal[i];
        }
    }
    // correct to exactly balance h_com: J_st_com^T F = h_com
    let a = dyn_q.j_st_com.transpose();
    let h = DVector::from_iterator(6, (0..6).map(|i| dyn_q.h_com[i]));
    let resid = &h - &a * &f0;
    let pinv = a.clone().pseudo_inverse(1e-10).ok()?;
    let f = f0 + pinv * resid;

    let mut u = DVector::zeros(problem.n());
    u.rows_mut(problem.layout.force_offset(), n_st).copy_from(&f);
    if problem.max_violation(&u) <= 1e-7 {
        Some(u)
    } else {
        None
    }
}
