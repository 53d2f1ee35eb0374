//! Rigid transforms.
//!
//! Poses are `nalgebra` isometries: a unit quaternion plus a translation in
//! meters. This module adds the handful of conversions the rest of the crate
//! needs on top of that.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

/// Rigid transform in SE(3).
pub type Pose = Isometry3<f64>;

/// Builds a pose from a translation and extrinsic X-Y-Z roll/pitch/yaw angles
/// (the URDF `<origin>` convention: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`).
pub fn pose_from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Pose {
    Isometry3::from_parts(
        Translation3::new(xyz[0], xyz[1], xyz[2]),
        UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
    )
}

/// Builds a pose from `(qw, qx, qy, qz)` and a translation. A quaternion that
/// is already unit to within 1e-12 is kept bit-for-bit so that poses survive
/// a text round trip exactly; anything else is normalized.
pub fn pose_from_quat_translation(q: [f64; 4], t: [f64; 3]) -> Pose {
    let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    let rotation = if (quat.norm() - 1.0).abs() <= 1e-12 {
        UnitQuaternion::new_unchecked(quat)
    } else {
        UnitQuaternion::from_quaternion(quat)
    };
    Isometry3::from_parts(Translation3::new(t[0], t[1], t[2]), rotation)
}

/// `(qw, qx, qy, qz)` of a pose's rotation.
pub fn quat_wxyz(pose: &Pose) -> [f64; 4] {
    let q = pose.rotation.quaternion();
    [q.w, q.i, q.j, q.k]
}

/// Geodesic distance between two rotations, in radians.
pub fn rotation_distance(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    (a * b.inverse()).angle()
}

/// Axis-angle vector `log(R_target * R_current^T)`, world frame.
pub fn rotation_error(target: &UnitQuaternion<f64>, current: &UnitQuaternion<f64>) -> Vector3<f64> {
    (target * current.inverse()).scaled_axis()
}

/// Translation distance and rotation distance between two poses.
pub fn pose_distance(a: &Pose, b: &Pose) -> (f64, f64) {
    (
        (a.translation.vector - b.translation.vector).norm(),
        rotation_distance(&a.rotation, &b.rotation),
    )
}

/// Applies a world-frame perturbation: translation offset `dt` and rotation
/// `exp(dw)` pre-multiplied onto `pose`'s rotation.
pub fn perturb_world(pose: &Pose, dt: &Vector3<f64>, dw: &Vector3<f64>) -> Pose {
    Isometry3::from_parts(
        Translation3::from(pose.translation.vector + dt),
        UnitQuaternion::from_scaled_axis(*dw) * pose.rotation,
    )
}
