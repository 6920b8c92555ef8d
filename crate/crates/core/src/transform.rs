//! Rigid-body transforms and workspace poses.
//!
//! Rotations are unit quaternions in scalar-first (w, x, y, z) convention.
//! [`Pose`] stores its quaternion canonicalized to the w >= 0 hemisphere so
//! that q and -q construct the same value.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::Error;

/// A rigid-body transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            translation: Vector3::new(x, y, z),
            rotation: UnitQuaternion::identity(),
        }
    }

    /// Translation plus an intrinsic X-Y-Z (roll, pitch, yaw) rotation.
    pub fn from_xyz_rpy(xyz: Vector3<f64>, rpy: Vector3<f64>) -> Self {
        Self {
            translation: xyz,
            rotation: quat_from_rpy_intrinsic_xyz(rpy.x, rpy.y, rpy.z),
        }
    }

    /// `self` applied first, then `other` in the local frame of `self`.
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            translation: self.translation + self.rotation * other.translation,
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.translation + self.rotation * p
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }
}

/// Intrinsic X-Y-Z Euler angles: rotate about x, then the new y, then the new z.
pub fn quat_from_rpy_intrinsic_xyz(roll: f64, pitch: f64, yaw: f64) -> UnitQuaternion<f64> {
    let qx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), roll);
    let qy = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), pitch);
    let qz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
    qx * qy * qz
}

/// Flips a quaternion into the w >= 0 hemisphere. Ties at w == 0 are broken
/// by the sign of the first nonzero vector component so that q and -q always
/// map to the same representative.
pub fn canonicalize_quat(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let raw = q.into_inner();
    let flip = if raw.w < 0.0 {
        true
    } else if raw.w > 0.0 {
        false
    } else if raw.i != 0.0 {
        raw.i < 0.0
    } else if raw.j != 0.0 {
        raw.j < 0.0
    } else {
        raw.k < 0.0
    };
    if flip {
        UnitQuaternion::new_unchecked(-raw)
    } else {
        q
    }
}

/// A workspace pose: position in metres plus a unit-quaternion orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
}

impl Pose {
    /// Builds a pose; the orientation is canonicalized to w >= 0.
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: canonicalize_quat(orientation),
        }
    }

    /// Builds a pose from raw components `(px, py, pz, qw, qx, qy, qz)`.
    /// The quaternion is normalized; a near-zero norm is rejected. Inputs
    /// that are already unit to machine precision are taken verbatim so that
    /// serialisation roundtrips are bit-exact.
    pub fn from_components(p: [f64; 3], q_wxyz: [f64; 4]) -> Result<Self, Error> {
        let raw = Quaternion::new(q_wxyz[0], q_wxyz[1], q_wxyz[2], q_wxyz[3]);
        let norm = raw.norm();
        if norm < 1e-9 {
            return Err(Error::ZeroNormQuaternion);
        }
        let unit = if (norm - 1.0).abs() <= 1e-12 {
            UnitQuaternion::new_unchecked(raw)
        } else {
            UnitQuaternion::new_normalize(raw)
        };
        Ok(Self::new(Vector3::new(p[0], p[1], p[2]), unit))
    }

    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        self.orientation
    }

    /// Orientation components in scalar-first order.
    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.orientation.into_inner();
        [q.w, q.i, q.j, q.k]
    }

    /// Flat `(px, py, pz, qw, qx, qy, qz)` representation.
    pub fn components(&self) -> [f64; 7] {
        let q = self.quat_wxyz();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q[0],
            q[1],
            q[2],
            q[3],
        ]
    }
}

impl From<Transform> for Pose {
    fn from(t: Transform) -> Self {
        Pose::new(t.translation, t.rotation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn compose_identity_is_neutral() {
        let t = Transform::from_xyz_rpy(
            Vector3::new(0.1, -0.2, 0.3),
            Vector3::new(0.4, 0.5, -0.6),
        );
        let id = Transform::identity();
        let left = id.compose(&t);
        let right = t.compose(&id);
        assert_relative_eq!(left.translation, t.translation, epsilon = 1e-15);
        assert_relative_eq!(right.translation, t.translation, epsilon = 1e-15);
        assert_relative_eq!(
            left.rotation.into_inner().coords,
            t.rotation.into_inner().coords,
            epsilon = 1e-15
        );
    }

    #[test]
    fn compose_is_associative() {
        let a = Transform::from_xyz_rpy(Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.3, 0.0, 0.0));
        let b = Transform::from_xyz_rpy(Vector3::new(0.0, 2.0, 0.0), Vector3::new(0.0, -0.7, 0.2));
        let c = Transform::from_xyz_rpy(Vector3::new(0.0, 0.0, 3.0), Vector3::new(0.1, 0.9, 0.0));
        let ab_c = a.compose(&b).compose(&c);
        let a_bc = a.compose(&b.compose(&c));
        assert_relative_eq!(ab_c.translation, a_bc.translation, epsilon = 1e-12);
        assert_relative_eq!(
            ab_c.rotation.into_inner().coords,
            a_bc.rotation.into_inner().coords,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pose_canonicalizes_both_signs_to_same_value() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 2.0);
        let neg = UnitQuaternion::new_unchecked(-q.into_inner());
        let a = Pose::new(Vector3::zeros(), q);
        let b = Pose::new(Vector3::zeros(), neg);
        assert_eq!(a.quat_wxyz(), b.quat_wxyz());
        assert!(a.quat_wxyz()[0] >= 0.0);
    }

    #[test]
    fn pose_canonicalization_handles_w_zero() {
        // 180 degree rotation about z has w = 0 exactly.
        let q = UnitQuaternion::new_unchecked(Quaternion::new(0.0, 0.0, 0.0, 1.0));
        let neg = UnitQuaternion::new_unchecked(Quaternion::new(0.0, 0.0, 0.0, -1.0));
        let a = Pose::new(Vector3::zeros(), q);
        let b = Pose::new(Vector3::zeros(), neg);
        assert_eq!(a.quat_wxyz(), b.quat_wxyz());
    }

    #[test]
    fn zero_norm_quaternion_rejected() {
        let err = Pose::from_components([0.0; 3], [0.0; 4]);
        assert!(matches!(err, Err(Error::ZeroNormQuaternion)));
    }

    #[test]
    fn intrinsic_xyz_matches_axis_composition() {
        // Pure single-axis rotations must reduce to the plain axis-angle form.
        let roll = quat_from_rpy_intrinsic_xyz(0.7, 0.0, 0.0);
        let expect = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.7);
        assert_relative_eq!(
            roll.into_inner().coords,
            expect.into_inner().coords,
            epsilon = 1e-15
        );

        // Order check: intrinsic X-Y-Z applies roll first. Rotating the local
        // z axis by (roll=pi/2, yaw irrelevant after) sends z to -y.
        let q = quat_from_rpy_intrinsic_xyz(std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        let z = q * Vector3::z();
        assert_relative_eq!(z, Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn unit_helper() {
        let axis = nalgebra::Unit::new_normalize(Vector3::new(1.0, 1.0, 0.0));
        let q = UnitQuaternion::from_axis_angle(&axis, 1.0);
        assert_relative_eq!(q.into_inner().norm(), 1.0, epsilon = 1e-12);
    }
}
