//! Floating-base rigid-body model of a point-foot quadruped.
//!
//! The robot is a trunk plus four identical-topology legs (HAA, HFE, KFE),
//! twelve actuated joints in total. Dynamics are exposed in CoM coordinates:
//! the generalized velocity is `[xdot_com; omega_avg; qdot_j]`, which makes
//! the inertia matrix exactly block diagonal between the 6-D floating part
//! and the actuated part.

mod dynamics;
mod kinematics;

pub use dynamics::{base_dynamics, com_wrench_from_forces, compute_dynamics, BaseDynamics, DynamicsQuantities};
pub use kinematics::{full_kinematics, kinematics_from_state, leg_ik, BodyKin, FootKin, FullKinematics};

use nalgebra::{Matrix3, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{NUM_JOINTS, NUM_LEGS};

/// Leg order used everywhere in the crate.
pub const LEG_NAMES: [&str; NUM_LEGS] = ["LF", "RF", "LH", "RH"];

/// Joint order within one leg.
pub const JOINT_NAMES: [&str; 3] = ["HAA", "HFE", "KFE"];

/// Flat joint index (0..12) from a name like `"LF_KFE"`.
pub fn joint_index(name: &str) -> Option<usize> {
    let (leg, joint) = name.split_once('_')?;
    let l = LEG_NAMES.iter().position(|n| *n == leg)?;
    let j = JOINT_NAMES.iter().position(|n| *n == joint)?;
    Some(l * 3 + j)
}

/// Name of a flat joint index, e.g. `joint_name(11) == "RH_KFE"`.
pub fn joint_name(idx: usize) -> String {
    format!("{}_{}", LEG_NAMES[idx / 3], JOINT_NAMES[idx % 3])
}

/// Errors produced by model construction, validation and file IO.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported model file version {0} (expected 1)")]
    Version(u32),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Mass properties of one rigid link, expressed in the link frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkParams {
    /// Link mass (kg).
    pub mass: f64,
    /// CoM offset from the link frame origin (m).
    pub com: [f64; 3],
    /// Rotational inertia about the link CoM (kg m^2), row-major 3x3.
    pub inertia: [[f64; 3]; 3],
}

impl LinkParams {
    pub fn com_vec(&self) -> Vector3<f64> {
        Vector3::from(self.com)
    }

    pub fn inertia_mat(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.inertia[r][c])
    }
}

/// One revolute joint: anchor point and rotation axis in the parent frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointParams {
    pub anchor: [f64; 3],
    pub axis: [f64; 3],
}

impl JointParams {
    pub fn anchor_vec(&self) -> Vector3<f64> {
        Vector3::from(self.anchor)
    }

    pub fn axis_vec(&self) -> Vector3<f64> {
        Vector3::from(self.axis)
    }
}

/// Torque limit as a function of joint position.
///
/// The piecewise profile mirrors linkage-driven joints whose usable torque
/// depends on the configuration; entries are `[q, tau_min, tau_max]` sorted
/// by `q`, interpolated linearly and clamped at the ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TorqueLimitProfile {
    Constant { min: f64, max: f64 },
    Piecewise { points: Vec<[f64; 3]> },
}

impl TorqueLimitProfile {
    /// Evaluate `(tau_min, tau_max)` at joint position `q`.
    pub fn bounds(&self, q: f64) -> (f64, f64) {
        match self {
            TorqueLimitProfile::Constant { min, max } => (*min, *max),
            TorqueLimitProfile::Piecewise { points } => {
                if points.is_empty() {
                    return (f64::NEG_INFINITY, f64::INFINITY);
                }
                if q <= points[0][0] {
                    return (points[0][1], points[0][2]);
                }
                for w in points.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    if q <= b[0] {
                        let s = (q - a[0]) / (b[0] - a[0]);
                        return (a[1] + s * (b[1] - a[1]), a[2] + s * (b[2] - a[2]));
                    }
                }
                let last = points[points.len() - 1];
                (last[1], last[2])
            }
        }
    }

    fn validate(&self, name: &str) -> Result<(), ModelError> {
        match self {
            TorqueLimitProfile::Constant { min, max } => {
                if min >= max {
                    return Err(ModelError::Invalid(format!(
                        "{name}: torque limit min {min} >= max {max}"
                    )));
                }
            }
            TorqueLimitProfile::Piecewise { points } => {
                if points.len() < 2 {
                    return Err(ModelError::Invalid(format!(
                        "{name}: piecewise torque profile needs at least 2 points"
                    )));
                }
                for w in points.windows(2) {
                    if w[1][0] <= w[0][0] {
                        return Err(ModelError::Invalid(format!(
                            "{name}: piecewise torque profile not sorted by q"
                        )));
                    }
                }
                for p in points {
                    if p[1] >= p[2] {
                        return Err(ModelError::Invalid(format!(
                            "{name}: piecewise torque profile has min >= max at q={}",
                            p[0]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Kinematic chain and mass properties of one leg.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LegModel {
    /// HAA, HFE, KFE. The HAA anchor is expressed in the trunk frame, the
    /// others in the preceding link frame.
    pub joints: [JointParams; 3],
    /// Hip link, upper link, lower link.
    pub links: [LinkParams; 3],
    /// Point-foot position in the lower-link frame.
    pub foot: [f64; 3],
}

/// Kinematic and inertial description of the quadruped plus actuation limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotModel {
    pub version: u32,
    pub trunk: LinkParams,
    /// Legs in [`LEG_NAMES`] order: LF, RF, LH, RH.
    pub legs: [LegModel; 4],
    /// Joint position limits (rad), flat order leg-major.
    pub q_min: [f64; NUM_JOINTS],
    pub q_max: [f64; NUM_JOINTS],
    /// Per-joint torque limit profiles.
    pub torque_limits: Vec<TorqueLimitProfile>,
}

impl RobotModel {
    /// Total robot mass (kg).
    pub fn total_mass(&self) -> f64 {
        self.trunk.mass + self.legs.iter().flat_map(|l| l.links.iter()).map(|l| l.mass).sum::<f64>()
    }

    /// Evaluate the torque bounds of every joint at positions `q`.
    pub fn torque_bounds(&self, q: &SVector<f64, NUM_JOINTS>) -> ([f64; NUM_JOINTS], [f64; NUM_JOINTS]) {
        let mut lo = [0.0; NUM_JOINTS];
        let mut hi = [0.0; NUM_JOINTS];
        for i in 0..NUM_JOINTS {
            let (a, b) = self.torque_limits[i].bounds(q[i]);
            lo[i] = a;
            hi[i] = b;
        }
        (lo, hi)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        let model: RobotModel = serde_json::from_str(s)?;
        if model.version != 1 {
            return Err(ModelError::Version(model.version));
        }
        model.validate()?;
        Ok(model)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    /// Check the structural invariants: positive masses, SPD link inertias,
    /// unit joint axes and ordered joint limits.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.total_mass() <= 0.0 {
            return Err(ModelError::Invalid("total mass must be > 0".into()));
        }
        if self.torque_limits.len() != NUM_JOINTS {
            return Err(ModelError::Invalid(format!(
                "expected {NUM_JOINTS} torque limit profiles, got {}",
                self.torque_limits.len()
            )));
        }
        let check_link = |link: &LinkParams, name: &str| -> Result<(), ModelError> {
            if link.mass <= 0.0 {
                return Err(ModelError::Invalid(format!("{name}: mass must be > 0")));
            }
            let inertia = nalgebra::DMatrix::from_fn(3, 3, |r, c| link.inertia[r][c]);
            crate::math::check_spd(&inertia, 1e-9)
                .map_err(|e| ModelError::Invalid(format!("{name}: inertia {e}")))?;
            Ok(())
        };
        check_link(&self.trunk, "trunk")?;
        for (l, leg) in self.legs.iter().enumerate() {
            for (j, link) in leg.links.iter().enumerate() {
                check_link(link, &format!("{}_{}", LEG_NAMES[l], JOINT_NAMES[j]))?;
            }
            for (j, joint) in leg.joints.iter().enumerate() {
                let n = joint.axis_vec().norm();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(ModelError::Invalid(format!(
                        "{}_{}: joint axis must be unit length (norm {n})",
                        LEG_NAMES[l], JOINT_NAMES[j]
                    )));
                }
            }
        }
        for i in 0..NUM_JOINTS {
            if self.q_min[i] >= self.q_max[i] {
                return Err(ModelError::Invalid(format!(
                    "{}: q_min {} >= q_max {}",
                    joint_name(i),
                    self.q_min[i],
                    self.q_max[i]
                )));
            }
            self.torque_limits[i].validate(&joint_name(i))?;
        }
        Ok(())
    }

    /// Default desk-scale model: 90 kg total, 60 kg trunk, 7.5 kg legs with
    /// 0.35 m upper/lower links on a 0.75 x 0.45 m hip rectangle. Front legs
    /// stand knee-back, hind legs knee-forward.
    pub fn desk_hyq() -> Self {
        let rod_inertia = |m: f64, l: f64, axis: usize| -> [[f64; 3]; 3] {
            // slender rod along `axis`, floor keeps the matrix PD
            let i_perp = (m * l * l / 12.0).max(1e-4);
            let i_axis: f64 = 1e-3;
            let mut out = [[0.0; 3]; 3];
            for k in 0..3 {
                out[k][k] = if k == axis { i_axis } else { i_perp };
            }
            out
        };

        let make_leg = |side_y: f64| -> LegModel {
            let d = 0.08 * side_y; // lateral hip-link offset, outward
            LegModel {
                joints: [
                    // HAA anchor filled in per leg below; axis rolls about x
                    JointParams { anchor: [0.0, 0.0, 0.0], axis: [1.0, 0.0, 0.0] },
                    JointParams { anchor: [0.0, d, 0.0], axis: [0.0, 1.0, 0.0] },
                    JointParams { anchor: [0.0, 0.0, -0.35], axis: [0.0, 1.0, 0.0] },
                ],
                links: [
                    LinkParams { mass: 4.0, com: [0.0, d / 2.0, 0.0], inertia: rod_inertia(4.0, 0.08, 1) },
                    LinkParams { mass: 2.5, com: [0.0, 0.0, -0.175], inertia: rod_inertia(2.5, 0.35, 2) },
                    LinkParams { mass: 1.0, com: [0.0, 0.0, -0.175], inertia: rod_inertia(1.0, 0.35, 2) },
                ],
                foot: [0.0, 0.0, -0.35],
            }
        };

        let anchors = [
            [0.375, 0.225, 0.0],   // LF
            [0.375, -0.225, 0.0],  // RF
            [-0.375, 0.225, 0.0],  // LH
            [-0.375, -0.225, 0.0], // RH
        ];
        let sides = [1.0, -1.0, 1.0, -1.0];
        let mut legs: Vec<LegModel> = Vec::with_capacity(4);
        for l in 0..4 {
            let mut leg = make_leg(sides[l]);
            leg.joints[0].anchor = anchors[l];
            legs.push(leg);
        }
        let legs: [LegModel; 4] = legs.try_into().unwrap();

        // front legs flex forward (knee behind hip), hind legs mirror that
        let mut q_min = [0.0; NUM_JOINTS];
        let mut q_max = [0.0; NUM_JOINTS];
        for l in 0..4 {
            let front = l < 2;
            q_min[l * 3] = -0.61;
            q_max[l * 3] = 0.61;
            if front {
                q_min[l * 3 + 1] = -0.9;
                q_max[l * 3 + 1] = 1.75;
                q_min[l * 3 + 2] = -2.45;
                q_max[l * 3 + 2] = -0.1;
            } else {
                q_min[l * 3 + 1] = -1.75;
                q_max[l * 3 + 1] = 0.9;
                q_min[l * 3 + 2] = 0.1;
                q_max[l * 3 + 2] = 2.45;
            }
        }

        let model = RobotModel {
            version: 1,
            trunk: LinkParams {
                mass: 60.0,
                com: [0.0, 0.0, 0.0],
                inertia: [[1.7, 0.0, 0.0], [0.0, 4.5, 0.0], [0.0, 0.0, 5.3]],
            },
            legs,
            q_min,
            q_max,
            torque_limits: vec![TorqueLimitProfile::Constant { min: -120.0, max: 120.0 }; NUM_JOINTS],
        };
        model.validate().expect("built-in model is valid");
        model
    }

    /// Joint angles of the nominal stance with the trunk `height` above the
    /// feet and each foot directly under its hip.
    pub fn standing_pose(&self, height: f64) -> SVector<f64, NUM_JOINTS> {
        let l_u = 0.35;
        let half = (height / (2.0 * l_u)).clamp(-1.0, 1.0).acos();
        let mut q = SVector::<f64, NUM_JOINTS>::zeros();
        for l in 0..4 {
            let sign = if l < 2 { 1.0 } else { -1.0 };
            q[l * 3 + 1] = sign * half;
            q[l * 3 + 2] = -sign * 2.0 * half;
        }
        q
    }
}

/// Physical state of the robot: base orientation, CoM position, mixed
/// CoM/base velocity `[xdot_com (world); omega_b (body)]` and joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    /// Base (trunk) orientation, world from body.
    pub orientation: UnitQuaternion<f64>,
    /// Whole-robot CoM position, world frame (m).
    pub x_com: Vector3<f64>,
    /// CoM linear velocity, world frame (m/s).
    pub xdot_com: Vector3<f64>,
    /// Base angular velocity, body frame (rad/s).
    pub omega_b: Vector3<f64>,
    /// Joint positions (rad), leg-major flat order.
    pub q: SVector<f64, NUM_JOINTS>,
    /// Joint velocities (rad/s).
    pub dq: SVector<f64, NUM_JOINTS>,
}

impl RobotState {
    pub fn new(
        orientation: UnitQuaternion<f64>,
        x_com: Vector3<f64>,
        xdot_com: Vector3<f64>,
        omega_b: Vector3<f64>,
        q: SVector<f64, NUM_JOINTS>,
        dq: SVector<f64, NUM_JOINTS>,
    ) -> Result<Self, ModelError> {
        let state = RobotState { orientation, x_com, xdot_com, omega_b, q, dq };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.orientation.as_vector().norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(ModelError::InvalidState(format!("quaternion norm {n} not within 1e-9 of 1")));
        }
        let finite = self.x_com.iter().all(|v| v.is_finite())
            && self.xdot_com.iter().all(|v| v.is_finite())
            && self.omega_b.iter().all(|v| v.is_finite())
            && self.q.iter().all(|v| v.is_finite())
            && self.dq.iter().all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::InvalidState("non-finite state value".into()));
        }
        Ok(())
    }

    /// Base angular velocity in the world frame.
    pub fn omega_world(&self) -> Vector3<f64> {
        self.orientation * self.omega_b
    }
}

/// Contact mode of one leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContactMode {
    Stance,
    Swing,
}

/// Contact description of one leg, as assumed by the controller.
#[derive(Debug, Clone)]
pub struct LegContact {
    pub mode: ContactMode,
    /// Contact point in world frame (stance legs).
    pub point: Vector3<f64>,
    /// Terrain unit normal at the contact.
    pub normal: Vector3<f64>,
    /// Friction coefficient used for the cone constraints.
    pub mu: f64,
    /// Lower/upper bounds on the normal force component (N).
    pub f_min: f64,
    pub f_max: f64,
}

impl LegContact {
    pub fn swing() -> Self {
        LegContact {
            mode: ContactMode::Swing,
            point: Vector3::zeros(),
            normal: Vector3::z(),
            mu: 0.7,
            f_min: 2.0,
            f_max: 600.0,
        }
    }

    pub fn stance(point: Vector3<f64>, normal: Vector3<f64>, mu: f64, f_min: f64, f_max: f64) -> Self {
        LegContact { mode: ContactMode::Stance, point, normal, mu, f_min, f_max }
    }
}

/// Per-leg contact assumptions for one control tick.
#[derive(Debug, Clone)]
pub struct ContactState {
    pub legs: [LegContact; 4],
}

impl ContactState {
    pub fn all_stance(points: [Vector3<f64>; 4], normal: Vector3<f64>, mu: f64) -> Self {
        ContactState {
            legs: points.map(|p| LegContact::stance(p, normal, mu, 2.0, 600.0)),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (l, c) in self.legs.iter().enumerate() {
            if (c.normal.norm() - 1.0).abs() > 1e-9 {
                return Err(ModelError::Invalid(format!("{}: contact normal not unit", LEG_NAMES[l])));
            }
            if !(c.f_min > 0.0 && c.f_min < c.f_max) {
                return Err(ModelError::Invalid(format!(
                    "{}: need 0 < f_min < f_max, got [{}, {}]",
                    LEG_NAMES[l], c.f_min, c.f_max
                )));
            }
            if c.mu <= 0.0 {
                return Err(ModelError::Invalid(format!("{}: mu must be > 0", LEG_NAMES[l])));
            }
        }
        Ok(())
    }

    pub fn stance_legs(&self) -> Vec<usize> {
        (0..4).filter(|&l| self.legs[l].mode == ContactMode::Stance).collect()
    }

    pub fn swing_legs(&self) -> Vec<usize> {
        (0..4).filter(|&l| self.legs[l].mode == ContactMode::Swing).collect()
    }

    pub fn n_stance(&self) -> usize {
        self.stance_legs().len()
    }
}
