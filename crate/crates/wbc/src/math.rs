//! Small geometry and linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, Matrix3, UnitQuaternion, Vector3};

/// Skew-symmetric (cross-product) matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// World-frame orientation error `vee(log(R_d * R^T))`.
///
/// This is the axis-angle rotation that takes the actual orientation onto
/// the desired one, the standard error for PD+ style Cartesian impedances.
pub fn orientation_error(desired: &UnitQuaternion<f64>, actual: &UnitQuaternion<f64>) -> Vector3<f64> {
    (desired * actual.inverse()).scaled_axis()
}

/// Integrate a unit quaternion by a body-frame angular velocity over `dt`.
pub fn integrate_quat(q: &UnitQuaternion<f64>, omega_body: &Vector3<f64>, dt: f64) -> UnitQuaternion<f64> {
    q * UnitQuaternion::from_scaled_axis(omega_body * dt)
}

/// Check symmetry (to `sym_tol`) and strict positive definiteness of a
/// square matrix. Returns the smallest eigenvalue on success.
pub fn check_spd(m: &DMatrix<f64>, sym_tol: f64) -> Result<f64, SpdError> {
    if m.nrows() != m.ncols() {
        return Err(SpdError::NotSquare);
    }
    let asym = (m - m.transpose()).amax();
    if asym > sym_tol {
        return Err(SpdError::NotSymmetric { asym });
    }
    let sym = nalgebra::SymmetricEigen::new(m.clone());
    let min_eig = sym.eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(SpdError::NotPositiveDefinite { min_eig });
    }
    Ok(min_eig)
}

/// Failure modes of [`check_spd`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpdError {
    #[error("matrix is not square")]
    NotSquare,
    #[error("matrix is not symmetric (max asymmetry {asym:.3e})")]
    NotSymmetric { asym: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },
}

/// Two unit vectors orthogonal to `n` and to each other.
///
/// `n` must be unit length; the returned `(t1, t2, n)` triplet is a
/// right-handed orthonormal basis.
pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Roll-pitch-yaw (XYZ extrinsic) angles of a quaternion.
pub fn rpy(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let (r, p, y) = q.euler_angles();
    Vector3::new(r, p, y)
}

/// Quaternion from roll-pitch-yaw angles.
pub fn quat_from_rpy(roll: f64, pitch: f64, yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(roll, pitch, yaw)
}
