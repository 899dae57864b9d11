//! Passive whole-body control for a torque-controlled point-foot quadruped.

pub mod math;
pub mod model;
pub mod qp;
pub mod tasks;

pub use model::{ContactState, DynamicsQuantities, RobotModel, RobotState};

/// Gravitational acceleration (m/s^2), +z up.
pub const GRAVITY: f64 = 9.81;

/// Number of actuated joints.
pub const NUM_JOINTS: usize = 12;

/// Number of legs.
pub const NUM_LEGS: usize = 4;

/// Generalized-velocity dimension (6 floating-base + 12 joints).
pub const NV: usize = 18;
