//! Equations of motion in base and CoM coordinates.
//!
//! Base coordinates use `u = [v_base; omega_base; qdot_j]` (world frames).
//! CoM coordinates use `w = [xdot_com; omega_avg; qdot_j]`, where
//! `omega_avg` is the locked-inertia average angular velocity. The velocity
//! transform `w = T(q) u` is a congruence, so the transformed inertia matrix
//! is exactly block diagonal between the floating 6-D part and the joints,
//! and the floating block is `blkdiag(m I3, Theta)` with `Theta` the
//! composite rigid-body inertia about the CoM.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};

use super::{ContactState, FullKinematics, ModelError, RobotModel, RobotState};
use crate::math::skew;
use crate::{GRAVITY, NUM_JOINTS, NUM_LEGS, NV};

/// Mass matrix and bias vector in base coordinates.
#[derive(Debug, Clone)]
pub struct BaseDynamics {
    /// 18 x 18 symmetric mass matrix.
    pub mass_matrix: DMatrix<f64>,
    /// 18-vector of Coriolis, centrifugal and gravity forces.
    pub bias: DVector<f64>,
}

/// Assemble the base-coordinates equations of motion from per-body data:
/// `M u_dot + h = generalized applied forces`.
pub fn base_dynamics(kin: &FullKinematics) -> BaseDynamics {
    let g = Vector3::new(0.0, 0.0, -GRAVITY);
    let mut m = DMatrix::zeros(NV, NV);
    let mut h = DVector::zeros(NV);
    for b in &kin.bodies {
        let jw = b.jac.rows(0, 3);
        let jv = b.jac.rows(3, 3);
        m += jw.transpose() * b.inertia_w * jw;
        m += jv.transpose() * (b.mass * &jv);

        // Newton-Euler at zero generalized acceleration
        let torque = b.inertia_w * b.alpha0 + b.omega.cross(&(b.inertia_w * b.omega));
        let force = b.mass * (b.a_com0 - g);
        h += jw.transpose() * torque + jv.transpose() * force;
    }
    // enforce exact symmetry against rounding
    let m = (&m + m.transpose()) * 0.5;
    BaseDynamics { mass_matrix: m, bias: h }
}

/// All Eq.-of-motion blocks after the CoM coordinate transform, plus the
/// contact-split Jacobians needed by the controller and QP.
#[derive(Debug, Clone)]
pub struct DynamicsQuantities {
    pub total_mass: f64,
    /// Whole-robot CoM, world frame.
    pub com: Vector3<f64>,
    /// Generalized velocity in CoM coordinates `[xdot_com; omega_avg; qdot]`.
    pub v_gen: DVector<f64>,
    /// Floating-base 6x6 inertia `blkdiag(m I3, Theta)`.
    pub m_com: Matrix6<f64>,
    /// Actuated-block 12x12 inertia.
    pub m_j: DMatrix<f64>,
    /// Floating-base bias (gravity + velocity products).
    pub h_com: Vector6<f64>,
    /// Actuated-block bias.
    pub h_j: DVector<f64>,
    /// Stance-feet Jacobian (n_st x 18) in CoM coordinates, stance legs in
    /// leg order; `j_st_com`/`j_st_j` are its base/joint column blocks.
    pub j_st: DMatrix<f64>,
    pub j_st_com: DMatrix<f64>,
    pub j_st_j: DMatrix<f64>,
    /// Swing-feet Jacobian blocks, same layout.
    pub j_sw: DMatrix<f64>,
    pub j_sw_com: DMatrix<f64>,
    pub j_sw_j: DMatrix<f64>,
    /// All-feet Jacobian (12 x 18) in CoM coordinates, leg order.
    pub j_feet: DMatrix<f64>,
    /// Drift `Jdot * w` for stance/swing/all feet.
    pub jdot_v_st: DVector<f64>,
    pub jdot_v_sw: DVector<f64>,
    pub jdot_v_feet: DVector<f64>,
    /// Foot positions/velocities in world frame, leg order.
    pub foot_pos: [Vector3<f64>; NUM_LEGS],
    pub foot_vel: [Vector3<f64>; NUM_LEGS],
    /// Stance/swing leg indices (leg order).
    pub stance_legs: Vec<usize>,
    pub swing_legs: Vec<usize>,
}

impl DynamicsQuantities {
    pub fn n_st(&self) -> usize {
        3 * self.stance_legs.len()
    }

    pub fn n_sw(&self) -> usize {
        3 * self.swing_legs.len()
    }

    /// Kinetic energy in CoM coordinates, `1/2 w^T blkdiag(M_com, M_j) w`.
    pub fn kinetic_energy(&self) -> f64 {
        let v6 = self.v_gen.rows(0, 6).into_owned();
        let vj = self.v_gen.rows(6, NUM_JOINTS).into_owned();
        0.5 * v6.dot(&(self.m_com * Vector6::from_column_slice(v6.as_slice())))
            + 0.5 * vj.dot(&(&self.m_j * &vj))
    }
}

/// Compute every Eq.-1 block in CoM coordinates for the given state and
/// contact split.
///
/// The actuated inertia is the Schur complement of the locked floating block,
/// the bias comes from an inverse-dynamics evaluation at zero CoM-coordinate
/// acceleration, and the feet drift terms `Jdot w` are propagated with the
/// zero-acceleration spatial recursion.
pub fn compute_dynamics(
    model: &RobotModel,
    state: &RobotState,
    contacts: &ContactState,
) -> Result<DynamicsQuantities, ModelError> {
    contacts.validate()?;
    let kin = super::kinematics_from_state(model, state)?;
    let dq = DVector::from_column_slice(state.dq.as_slice());
    compute_dynamics_from_kinematics(model, &kin, &dq, contacts)
}

/// Same as [`compute_dynamics`] but reusing an existing kinematic snapshot
/// (the simulator already has one per inner step).
pub fn compute_dynamics_from_kinematics(
    _model: &RobotModel,
    kin: &FullKinematics,
    dq: &DVector<f64>,
    contacts: &ContactState,
) -> Result<DynamicsQuantities, ModelError> {
    let base = base_dynamics(kin);
    let m_total = kin.total_mass;
    let com = kin.com;

    // Locked rotational inertia about the CoM and centroidal angular momentum
    let mut theta = Matrix3::zeros();
    let mut theta_dot = Matrix3::zeros();
    let mut ang_mom = Vector3::zeros();
    let mut ang_mom_jac = DMatrix::zeros(3, NV);
    let mut ang_mom_rate0 = Vector3::zeros();
    for b in &kin.bodies {
        let r = b.com - com;
        let rdot = b.v_com - kin.com_vel;
        theta += b.inertia_w + b.mass * (r.norm_squared() * Matrix3::identity() - r * r.transpose());
        let inertia_dot = skew(&b.omega) * b.inertia_w - b.inertia_w * skew(&b.omega);
        theta_dot += inertia_dot
            + b.mass
                * (2.0 * r.dot(&rdot) * Matrix3::identity()
                    - rdot * r.transpose()
                    - r * rdot.transpose());
        ang_mom += b.inertia_w * b.omega + b.mass * r.cross(&b.v_com);
        ang_mom_jac += b.inertia_w * b.jac.rows(0, 3) + b.mass * skew(&r) * b.jac.rows(3, 3);
        ang_mom_rate0 += b.omega.cross(&(b.inertia_w * b.omega))
            + b.inertia_w * b.alpha0
            + b.mass * (rdot.cross(&b.v_com) + r.cross(&b.a_com0));
    }
    let theta = (theta + theta.transpose()) * 0.5;
    let theta_inv = theta.try_inverse().ok_or_else(|| {
        ModelError::Invalid("locked inertia about the CoM is singular".to_string())
    })?;
    let omega_avg = theta_inv * ang_mom;

    // Velocity transform w = T u with rows [com_jac; Theta^-1 * A_L; 0 I]
    let mut t = DMatrix::zeros(NV, NV);
    t.view_mut((0, 0), (3, NV)).copy_from(&kin.com_jac);
    t.view_mut((3, 0), (3, NV)).copy_from(&(theta_inv * &ang_mom_jac));
    for i in 0..NUM_JOINTS {
        t[(6 + i, 6 + i)] = 1.0;
    }
    let t_b = t.view((0, 0), (6, 6)).into_owned();
    let t_j = t.view((0, 6), (6, NUM_JOINTS)).into_owned();
    let t_b_inv = t_b
        .try_inverse()
        .ok_or_else(|| ModelError::Invalid("CoM velocity transform is singular".to_string()))?;
    let mut t_inv = DMatrix::zeros(NV, NV);
    t_inv.view_mut((0, 0), (6, 6)).copy_from(&t_b_inv);
    t_inv.view_mut((0, 6), (6, NUM_JOINTS)).copy_from(&(-&t_b_inv * &t_j));
    for i in 0..NUM_JOINTS {
        t_inv[(6 + i, 6 + i)] = 1.0;
    }

    // generalized velocities in both coordinate systems
    let u = {
        let mut u = DVector::zeros(NV);
        u.fixed_rows_mut::<3>(0).copy_from(&kin.base_vel);
        u.fixed_rows_mut::<3>(3).copy_from(&kin.base_omega);
        u.rows_mut(6, NUM_JOINTS).copy_from(dq);
        u
    };
    let mut v_gen = DVector::zeros(NV);
    v_gen.fixed_rows_mut::<3>(0).copy_from(&kin.com_vel);
    v_gen.fixed_rows_mut::<3>(3).copy_from(&omega_avg);
    v_gen.rows_mut(6, NUM_JOINTS).copy_from(dq);

    // transformed inertia: exactly blkdiag(m I, Theta, Schur complement)
    let m_tilde = t_inv.transpose() * &base.mass_matrix * &t_inv;
    let mut m_com = Matrix6::zeros();
    m_com.fixed_view_mut::<3, 3>(0, 0).copy_from(&(m_total * Matrix3::identity()));
    m_com.fixed_view_mut::<3, 3>(3, 3).copy_from(&theta);
    let m_j = m_tilde.view((6, 6), (NUM_JOINTS, NUM_JOINTS)).into_owned();
    let m_j = (&m_j + m_j.transpose()) * 0.5;

    // bias after the transform: h_tilde = T^-T (M * u_dot0 + h) where u_dot0
    // is the base acceleration at zero CoM-coordinate acceleration,
    // u_dot0 = d/dt(T^-1) w = -T^-1 (Tdot u).
    let mut t_dot_u = DVector::zeros(NV);
    t_dot_u.fixed_rows_mut::<3>(0).copy_from(&kin.com_acc0);
    t_dot_u
        .fixed_rows_mut::<3>(3)
        .copy_from(&(theta_inv * (ang_mom_rate0 - theta_dot * omega_avg)));
    let u_dot0 = -(&t_inv * t_dot_u);
    let h_tilde = t_inv.transpose() * (&base.mass_matrix * &u_dot0 + &base.bias);
    let h_com = Vector6::from_column_slice(h_tilde.rows(0, 6).as_slice());
    let h_j = h_tilde.rows(6, NUM_JOINTS).into_owned();

    // feet Jacobians in CoM coordinates and their drift terms
    let stance_legs = contacts.stance_legs();
    let swing_legs = contacts.swing_legs();
    let mut j_feet = DMatrix::zeros(3 * NUM_LEGS, NV);
    let mut jdot_v_feet = DVector::zeros(3 * NUM_LEGS);
    let mut foot_pos = [Vector3::zeros(); NUM_LEGS];
    let mut foot_vel = [Vector3::zeros(); NUM_LEGS];
    for l in 0..NUM_LEGS {
        let jac_com_coords = &kin.feet[l].jac * &t_inv;
        j_feet.view_mut((3 * l, 0), (3, NV)).copy_from(&jac_com_coords);
        // foot acceleration at w_dot = 0: a0 + J_base * u_dot0
        let drift = kin.feet[l].acc0 + {
            let a = &kin.feet[l].jac * &u_dot0;
            Vector3::new(a[0], a[1], a[2])
        };
        jdot_v_feet.fixed_rows_mut::<3>(3 * l).copy_from(&drift);
        foot_pos[l] = kin.feet[l].pos;
        foot_vel[l] = kin.feet[l].vel;
    }

    let stack = |legs: &[usize]| -> (DMatrix<f64>, DVector<f64>) {
        let mut j = DMatrix::zeros(3 * legs.len(), NV);
        let mut d = DVector::zeros(3 * legs.len());
        for (k, &l) in legs.iter().enumerate() {
            j.view_mut((3 * k, 0), (3, NV))
                .copy_from(&j_feet.view((3 * l, 0), (3, NV)));
            d.rows_mut(3 * k, 3).copy_from(&jdot_v_feet.rows(3 * l, 3));
        }
        (j, d)
    };
    let (j_st, jdot_v_st) = stack(&stance_legs);
    let (j_sw, jdot_v_sw) = stack(&swing_legs);

    let split = |j: &DMatrix<f64>| -> (DMatrix<f64>, DMatrix<f64>) {
        (j.columns(0, 6).into_owned(), j.columns(6, NUM_JOINTS).into_owned())
    };
    let (j_st_com, j_st_j) = split(&j_st);
    let (j_sw_com, j_sw_j) = split(&j_sw);

    debug_assert!(u.len() == NV);

    Ok(DynamicsQuantities {
        total_mass: m_total,
        com,
        v_gen,
        m_com,
        m_j,
        h_com,
        h_j,
        j_st,
        j_st_com,
        j_st_j,
        j_sw,
        j_sw_com,
        j_sw_j,
        j_feet,
        jdot_v_st,
        jdot_v_sw,
        jdot_v_feet,
        foot_pos,
        foot_vel,
        stance_legs,
        swing_legs,
    })
}

/// CoM wrench produced by stance contact forces: `W_com = J_st_com^T F`.
///
/// `forces` stacks the stance-leg forces in leg order (3 per stance leg).
pub fn com_wrench_from_forces(dyn_q: &DynamicsQuantities, forces: &DVector<f64>) -> Result<Vector6<f64>, ModelError> {
    if forces.len() != dyn_q.n_st() {
        return Err(ModelError::Dimension(format!(
            "expected {} stance force components, got {}",
            dyn_q.n_st(),
            forces.len()
        )));
    }
    let w = dyn_q.j_st_com.transpose() * forces;
    Ok(Vector6::from_column_slice(w.as_slice()))
}
