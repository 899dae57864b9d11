//! Motion tasks: desired CoM wrench, swing-foot virtual forces and
//! acceleration targets, and the anomaly-correcting stance acceleration.
//!
//! The trunk and swing tasks are Cartesian impedances with feed-forward
//! terms; the stance task only acts when a loaded foot moves away from its
//! touchdown anchor.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, UnitQuaternion, Vector3, Vector6};

use crate::math::{check_spd, SpdError};
use crate::GRAVITY;

/// Trunk reference: desired CoM pose, twist, acceleration and the external
/// wrench estimate compensated by the controller.
#[derive(Debug, Clone)]
pub struct TrunkReference {
    pub x_com_d: Vector3<f64>,
    pub orientation_d: UnitQuaternion<f64>,
    /// Desired CoM velocity `[linear; angular]`, world frame.
    pub v_com_d: Vector6<f64>,
    /// Desired CoM acceleration `[linear; angular]`, world frame.
    pub vdot_com_d: Vector6<f64>,
    /// External-wrench estimate (N, N m), world frame. Zero by default.
    pub w_ext: Vector6<f64>,
}

impl TrunkReference {
    pub fn hold(x_com_d: Vector3<f64>, orientation_d: UnitQuaternion<f64>) -> Self {
        TrunkReference {
            x_com_d,
            orientation_d,
            v_com_d: Vector6::zeros(),
            vdot_com_d: Vector6::zeros(),
            w_ext: Vector6::zeros(),
        }
    }
}

/// Reference for one swing foot.
#[derive(Debug, Clone, Copy)]
pub struct SwingFootReference {
    pub x_d: Vector3<f64>,
    pub v_d: Vector3<f64>,
    pub vdot_d: Vector3<f64>,
    /// Force feed-forward of the virtual swing impedance.
    pub f_ff: Vector3<f64>,
}

impl SwingFootReference {
    pub fn hold(x_d: Vector3<f64>) -> Self {
        SwingFootReference { x_d, v_d: Vector3::zeros(), vdot_d: Vector3::zeros(), f_ff: Vector3::zeros() }
    }
}

/// Impedance gains of every task. All matrices must be symmetric positive
/// definite; constructors enforce it.
#[derive(Debug, Clone)]
pub struct ImpedanceGains {
    pub k_com: Matrix6<f64>,
    pub d_com: Matrix6<f64>,
    pub k_sw: Matrix3<f64>,
    pub d_sw: Matrix3<f64>,
    pub k_st: Matrix3<f64>,
    pub d_st: Matrix3<f64>,
}

impl ImpedanceGains {
    /// Build gains from the full blocks, rejecting non-SPD matrices.
    pub fn new(
        k_com: Matrix6<f64>,
        d_com: Matrix6<f64>,
        k_sw: Matrix3<f64>,
        d_sw: Matrix3<f64>,
        k_st: Matrix3<f64>,
        d_st: Matrix3<f64>,
    ) -> Result<Self, SpdError> {
        for m in [&k_com, &d_com] {
            check_spd(&DMatrix::from_fn(6, 6, |r, c| m[(r, c)]), 1e-9)?;
        }
        for m in [&k_sw, &d_sw, &k_st, &d_st] {
            check_spd(&DMatrix::from_fn(3, 3, |r, c| m[(r, c)]), 1e-9)?;
        }
        Ok(ImpedanceGains { k_com, d_com, k_sw, d_sw, k_st, d_st })
    }

    /// Block-diagonal gains from per-axis values.
    pub fn diagonal(
        k_lin: f64,
        d_lin: f64,
        k_ang: f64,
        d_ang: f64,
        k_sw: f64,
        d_sw: f64,
        k_st: f64,
        d_st: f64,
    ) -> Result<Self, SpdError> {
        let mut k_com = Matrix6::zeros();
        let mut d_com = Matrix6::zeros();
        for i in 0..3 {
            k_com[(i, i)] = k_lin;
            d_com[(i, i)] = d_lin;
            k_com[(3 + i, 3 + i)] = k_ang;
            d_com[(3 + i, 3 + i)] = d_ang;
        }
        Self::new(
            k_com,
            d_com,
            Matrix3::identity() * k_sw,
            Matrix3::identity() * d_sw,
            Matrix3::identity() * k_st,
            Matrix3::identity() * d_st,
        )
    }

    /// Gains used throughout the bundled experiments.
    pub fn defaults() -> Self {
        Self::diagonal(2000.0, 400.0, 1000.0, 200.0, 2000.0, 20.0, 100.0, 20.0)
            .expect("default gains are SPD")
    }
}

/// Trunk tracking errors fed to [`trunk_wrench`]. The rotational part of the
/// position error is the axis-angle world-frame error `vee(log(R_d R^T))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrunkErrors {
    pub dx_com: Vector6<f64>,
    pub dv_com: Vector6<f64>,
    pub dvdot_com: Vector6<f64>,
}

impl TrunkErrors {
    /// Build the error vector from the reference and the measured trunk pose
    /// and twist (`v_com = [xdot_com; omega_world]`).
    pub fn from_state(
        reference: &TrunkReference,
        x_com: &Vector3<f64>,
        orientation: &UnitQuaternion<f64>,
        v_com: &Vector6<f64>,
        vdot_com: &Vector6<f64>,
    ) -> Self {
        let mut dx = Vector6::zeros();
        dx.fixed_rows_mut::<3>(0).copy_from(&(reference.x_com_d - x_com));
        dx.fixed_rows_mut::<3>(3)
            .copy_from(&crate::math::orientation_error(&reference.orientation_d, orientation));
        TrunkErrors {
            dx_com: dx,
            dv_com: reference.v_com_d - v_com,
            dvdot_com: reference.vdot_com_d - vdot_com,
        }
    }
}

/// Desired CoM wrench: impedance + gravity compensation + acceleration
/// feed-forward, minus the external-wrench estimate.
pub fn trunk_wrench(
    errors: &TrunkErrors,
    reference: &TrunkReference,
    gains: &ImpedanceGains,
    m_com: &Matrix6<f64>,
    total_mass: f64,
) -> Vector6<f64> {
    let mut gravity = Vector6::zeros();
    gravity[2] = total_mass * GRAVITY;
    gains.k_com * errors.dx_com
        + gains.d_com * errors.dv_com
        + gravity
        + m_com * errors.dvdot_com
        - reference.w_ext
}

/// Swing-foot virtual force for one foot: `K dx + D dv + f_ff`.
pub fn swing_force(
    reference: &SwingFootReference,
    dx_sw: &Vector3<f64>,
    dv_sw: &Vector3<f64>,
    gains: &ImpedanceGains,
) -> Vector3<f64> {
    gains.k_sw * dx_sw + gains.d_sw * dv_sw + reference.f_ff
}

/// Swing acceleration target handed to the QP.
///
/// This is the acceleration-level counterpart of the force-level swing
/// impedance: the planned acceleration passes through unchanged and the QP
/// enforces it as a constraint, while the force-level expression is only
/// used by the passivity ledger.
pub fn swing_acceleration_target(reference: &SwingFootReference) -> Vector3<f64> {
    reference.vdot_d
}

/// Stance acceleration correcting anomalous stance-foot motion.
///
/// `anchor` is the foot position sampled at touchdown; the target vanishes
/// while the foot stays put.
pub fn stance_acceleration_target(
    anchor: &Vector3<f64>,
    x_st: &Vector3<f64>,
    v_st: &Vector3<f64>,
    gains: &ImpedanceGains,
) -> Vector3<f64> {
    gains.k_st * (anchor - x_st) - gains.d_st * v_st
}

/// Stack per-swing-leg acceleration targets in leg order.
pub fn stack_swing_targets(refs: &[(usize, SwingFootReference)]) -> DVector<f64> {
    let mut out = DVector::zeros(3 * refs.len());
    for (k, (_, r)) in refs.iter().enumerate() {
        out.fixed_rows_mut::<3>(3 * k).copy_from(&swing_acceleration_target(r));
    }
    out
}
