//! Forward kinematics, per-body Jacobians and velocity-product accelerations.
//!
//! All quantities are world frame. The base generalized velocity used for
//! Jacobians is `u = [v_base (world); omega_base (world); qdot_j]`.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, SVector, Vector3};

use super::{ModelError, RobotModel, RobotState};
use crate::{NUM_JOINTS, NUM_LEGS, NV};

/// Kinematic state of one rigid body.
#[derive(Debug, Clone)]
pub struct BodyKin {
    pub mass: f64,
    /// World rotation of the body frame.
    pub rot: Rotation3<f64>,
    /// World position of the body CoM.
    pub com: Vector3<f64>,
    /// World angular velocity.
    pub omega: Vector3<f64>,
    /// World velocity of the body CoM.
    pub v_com: Vector3<f64>,
    /// Angular acceleration at zero generalized acceleration.
    pub alpha0: Vector3<f64>,
    /// CoM acceleration at zero generalized acceleration.
    pub a_com0: Vector3<f64>,
    /// World-frame rotational inertia about the body CoM.
    pub inertia_w: Matrix3<f64>,
    /// 6 x 18 Jacobian of `[omega; v_com]` w.r.t. `u`.
    pub jac: DMatrix<f64>,
}

/// Kinematic state of one point foot.
#[derive(Debug, Clone)]
pub struct FootKin {
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
    /// Foot acceleration at zero generalized acceleration (`Jdot * u`).
    pub acc0: Vector3<f64>,
    /// 3 x 18 Jacobian of the foot velocity w.r.t. `u`.
    pub jac: DMatrix<f64>,
}

/// Full kinematic snapshot: trunk + 12 links + feet + whole-robot CoM data.
#[derive(Debug, Clone)]
pub struct FullKinematics {
    /// Base frame origin, world.
    pub base_pos: Vector3<f64>,
    pub base_rot: Rotation3<f64>,
    pub base_vel: Vector3<f64>,
    /// Base angular velocity, world frame.
    pub base_omega: Vector3<f64>,
    /// Bodies: index 0 = trunk, then leg-major links (1 + 3*leg + link).
    pub bodies: Vec<BodyKin>,
    /// World joint axes, flat joint order.
    pub joint_axis: [Vector3<f64>; NUM_JOINTS],
    /// World joint anchor points.
    pub joint_origin: [Vector3<f64>; NUM_JOINTS],
    pub feet: [FootKin; NUM_LEGS],
    pub total_mass: f64,
    /// Whole-robot CoM, world.
    pub com: Vector3<f64>,
    /// Whole-robot CoM velocity, world.
    pub com_vel: Vector3<f64>,
    /// CoM acceleration at zero generalized acceleration.
    pub com_acc0: Vector3<f64>,
    /// 3 x 18 CoM Jacobian.
    pub com_jac: DMatrix<f64>,
}

impl FullKinematics {
    /// Sum of per-link spatial kinetic energies.
    pub fn kinetic_energy(&self) -> f64 {
        self.bodies
            .iter()
            .map(|b| 0.5 * b.mass * b.v_com.norm_squared() + 0.5 * b.omega.dot(&(b.inertia_w * b.omega)))
            .sum()
    }

    /// Generalized velocity in base coordinates `[v_b; omega_w; qdot]`.
    pub fn base_generalized_velocity(&self, dq: &SVector<f64, NUM_JOINTS>) -> DVector<f64> {
        let mut u = DVector::zeros(NV);
        u.fixed_rows_mut::<3>(0).copy_from(&self.base_vel);
        u.fixed_rows_mut::<3>(3).copy_from(&self.base_omega);
        for i in 0..NUM_JOINTS {
            u[6 + i] = dq[i];
        }
        u
    }
}

struct FrameState {
    rot: Rotation3<f64>,
    origin: Vector3<f64>,
    v_origin: Vector3<f64>,
    omega: Vector3<f64>,
    a_origin: Vector3<f64>,
    alpha: Vector3<f64>,
    /// Joint columns contributing to this frame's motion: (flat index, axis, origin).
    path: Vec<(usize, Vector3<f64>, Vector3<f64>)>,
}

fn body_kin(model_link: &super::LinkParams, frame: &FrameState, base_pos: &Vector3<f64>) -> BodyKin {
    let com_local = frame.rot * model_link.com_vec();
    let com = frame.origin + com_local;
    let v_com = frame.v_origin + frame.omega.cross(&com_local);
    let a_com = frame.a_origin
        + frame.alpha.cross(&com_local)
        + frame.omega.cross(&frame.omega.cross(&com_local));
    let inertia_w = frame.rot * model_link.inertia_mat() * frame.rot.transpose();

    let mut jac = DMatrix::zeros(6, NV);
    // base columns: rigid motion of the whole robot
    jac.fixed_view_mut::<3, 3>(3, 0).copy_from(&Matrix3::identity());
    jac.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    jac.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-crate::math::skew(&(com - base_pos))));
    for (idx, axis, origin) in &frame.path {
        let col_w = axis;
        let col_v = axis.cross(&(com - origin));
        for r in 0..3 {
            jac[(r, 6 + idx)] = col_w[r];
            jac[(3 + r, 6 + idx)] = col_v[r];
        }
    }

    BodyKin {
        mass: model_link.mass,
        rot: frame.rot,
        com,
        omega: frame.omega,
        v_com,
        alpha0: frame.alpha,
        a_com0: a_com,
        inertia_w,
        jac,
    }
}

/// Forward kinematics with velocities and zero-acceleration propagation.
///
/// `base_rot`/`base_pos` place the trunk frame, `base_vel`/`base_omega` are
/// the world-frame velocity of the trunk origin and angular velocity.
pub fn full_kinematics(
    model: &RobotModel,
    base_rot: &Rotation3<f64>,
    base_pos: &Vector3<f64>,
    base_vel: &Vector3<f64>,
    base_omega: &Vector3<f64>,
    q: &SVector<f64, NUM_JOINTS>,
    dq: &SVector<f64, NUM_JOINTS>,
) -> FullKinematics {
    let trunk_frame = FrameState {
        rot: *base_rot,
        origin: *base_pos,
        v_origin: *base_vel,
        omega: *base_omega,
        a_origin: Vector3::zeros(),
        alpha: Vector3::zeros(),
        path: Vec::new(),
    };

    let mut bodies = Vec::with_capacity(13);
    bodies.push(body_kin(&model.trunk, &trunk_frame, base_pos));

    let mut joint_axis = [Vector3::zeros(); NUM_JOINTS];
    let mut joint_origin = [Vector3::zeros(); NUM_JOINTS];
    let mut feet: Vec<FootKin> = Vec::with_capacity(NUM_LEGS);

    for (l, leg) in model.legs.iter().enumerate() {
        let mut frame = FrameState {
            rot: trunk_frame.rot,
            origin: trunk_frame.origin,
            v_origin: trunk_frame.v_origin,
            omega: trunk_frame.omega,
            a_origin: trunk_frame.a_origin,
            alpha: trunk_frame.alpha,
            path: Vec::new(),
        };
        for (j, joint) in leg.joints.iter().enumerate() {
            let idx = l * 3 + j;
            let anchor_w = frame.rot * joint.anchor_vec();
            let origin = frame.origin + anchor_w;
            let v_origin = frame.v_origin + frame.omega.cross(&anchor_w);
            let a_origin = frame.a_origin
                + frame.alpha.cross(&anchor_w)
                + frame.omega.cross(&frame.omega.cross(&anchor_w));
            let axis = frame.rot * joint.axis_vec();

            joint_axis[idx] = axis;
            joint_origin[idx] = origin;

            // axis is fixed in the parent body, so it rotates with it
            let axis_dot = frame.omega.cross(&axis);
            let omega = frame.omega + axis * dq[idx];
            let alpha = frame.alpha + axis_dot * dq[idx];
            let rot = frame.rot * Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(joint.axis_vec()), q[idx]);

            let mut path = frame.path.clone();
            path.push((idx, axis, origin));
            frame = FrameState { rot, origin, v_origin, omega, a_origin, alpha, path };

            bodies.push(body_kin(&leg.links[j], &frame, base_pos));
        }

        // point foot fixed in the lower-link frame
        let foot_local = frame.rot * Vector3::from(leg.foot);
        let pos = frame.origin + foot_local;
        let vel = frame.v_origin + frame.omega.cross(&foot_local);
        let acc0 = frame.a_origin
            + frame.alpha.cross(&foot_local)
            + frame.omega.cross(&frame.omega.cross(&foot_local));
        let mut jac = DMatrix::zeros(3, NV);
        jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        jac.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-crate::math::skew(&(pos - base_pos))));
        for (idx, axis, origin) in &frame.path {
            let col = axis.cross(&(pos - origin));
            for r in 0..3 {
                jac[(r, 6 + idx)] = col[r];
            }
        }
        feet.push(FootKin { pos, vel, acc0, jac });
    }

    let total_mass = model.total_mass();
    let mut com = Vector3::zeros();
    let mut com_vel = Vector3::zeros();
    let mut com_acc0 = Vector3::zeros();
    let mut com_jac = DMatrix::zeros(3, NV);
    for b in &bodies {
        com += b.mass * b.com;
        com_vel += b.mass * b.v_com;
        com_acc0 += b.mass * b.a_com0;
        com_jac += b.jac.rows(3, 3) * b.mass;
    }
    com /= total_mass;
    com_vel /= total_mass;
    com_acc0 /= total_mass;
    com_jac /= total_mass;

    FullKinematics {
        base_pos: *base_pos,
        base_rot: *base_rot,
        base_vel: *base_vel,
        base_omega: *base_omega,
        bodies,
        joint_axis,
        joint_origin,
        feet: feet.try_into().unwrap(),
        total_mass,
        com,
        com_vel,
        com_acc0,
        com_jac,
    }
}

/// Kinematics from a [`RobotState`], recovering the base pose and velocity
/// from the stored CoM position/velocity.
pub fn kinematics_from_state(model: &RobotModel, state: &RobotState) -> Result<FullKinematics, ModelError> {
    state.validate()?;
    let rot = state.orientation.to_rotation_matrix();
    let omega_w = state.omega_world();

    // Pass with the base at the origin and zero base linear velocity: world
    // positions shift uniformly by the base position and point velocities by
    // the base velocity, everything else is invariant.
    let probe = full_kinematics(
        model,
        &rot,
        &Vector3::zeros(),
        &Vector3::zeros(),
        &omega_w,
        &state.q,
        &state.dq,
    );
    let base_pos = state.x_com - probe.com;
    let base_vel = state.xdot_com - probe.com_vel;

    let mut kin = probe;
    kin.base_pos = base_pos;
    kin.base_vel = base_vel;
    for b in &mut kin.bodies {
        b.com += base_pos;
        b.v_com += base_vel;
    }
    for f in &mut kin.feet {
        f.pos += base_pos;
        f.vel += base_vel;
    }
    for i in 0..NUM_JOINTS {
        kin.joint_origin[i] += base_pos;
    }
    kin.com += base_pos;
    kin.com_vel += base_vel;
    Ok(kin)
}

/// Closed-form inverse kinematics of one leg.
///
/// `target` is the desired foot position in the trunk frame. Returns the
/// HAA/HFE/KFE angles realizing it with the leg's natural knee direction
/// (front legs knee-back, hind legs knee-forward), or `None` when the target
/// is outside the reachable workspace.
pub fn leg_ik(model: &RobotModel, leg: usize, target: &Vector3<f64>) -> Option<[f64; 3]> {
    let lm = &model.legs[leg];
    let hip = lm.joints[0].anchor_vec();
    let d = lm.joints[1].anchor_vec().y; // signed lateral offset
    let l_u = -lm.joints[2].anchor_vec().z;
    let l_l = -Vector3::from(lm.foot).z;

    let r = target - hip;
    // roll about x so that the leg plane (offset d in local y) contains the target
    let rho2 = r.y * r.y + r.z * r.z;
    if rho2 < d * d {
        return None;
    }
    let zp = -(rho2 - d * d).sqrt(); // in-plane downward coordinate after unrolling
    // solve  y = d cos(phi) - zp sin(phi),  z = d sin(phi) + zp cos(phi)
    let phi = f64::atan2(d * r.z - zp * r.y, d * r.y + zp * r.z);

    // planar 2R in the (x, zp) plane
    let dist2 = r.x * r.x + zp * zp;
    let dist = dist2.sqrt();
    if dist > l_u + l_l - 1e-9 || dist < (l_u - l_l).abs() + 1e-9 {
        return None;
    }
    let cos_knee = ((dist2 - l_u * l_u - l_l * l_l) / (2.0 * l_u * l_l)).clamp(-1.0, 1.0);
    let knee_mag = cos_knee.acos();
    // front legs (0, 1) bend the knee backwards: KFE negative
    let knee = if leg < 2 { -knee_mag } else { knee_mag };

    // hip pitch: angle of the target direction plus the knee correction
    let gamma = f64::atan2(-r.x, -zp); // rotation about +y moving the foot backwards
    let beta = f64::atan2(l_l * knee.sin(), l_u + l_l * knee.cos());
    let hfe = gamma - beta;

    Some([phi, hfe, knee])
}
