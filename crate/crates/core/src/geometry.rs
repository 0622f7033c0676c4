//! Rigid-body primitives shared by every stage of the pipeline.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Angle between two nonzero vectors in radians, via `atan2(|a x b|, a . b)`.
///
/// Stable near 0 and pi where `acos` of the normalized dot product loses
/// precision.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// A proper 3x3 rotation matrix.
///
/// Serialized as nine row-major floats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates `RᵀR = I` and `det R = +1` within 1e-9.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if !err.is_finite() || err > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!("rotation is not orthonormal (max |RᵀR - I| = {err:.3e})")));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!("rotation has determinant {det:.6}, expected +1")));
        }
        Ok(Rotation(m))
    }

    /// Builds a rotation from its three rows without validation.
    pub(crate) fn from_rows_unchecked(r0: Vector3<f64>, r1: Vector3<f64>, r2: Vector3<f64>) -> Self {
        Rotation(Matrix3::from_rows(&[r0.transpose(), r1.transpose(), r2.transpose()]))
    }

    /// Rotation by `angle` radians about a (not necessarily unit) axis.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(*axis);
        Rotation(*nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix())
    }

    pub fn from_row_major(v: &[f64; 9]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(v))
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let c = ((self.0.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Unit rotation axis scaled by the rotation angle (axis-angle vector).
    pub fn scaled_axis(&self) -> Vector3<f64> {
        nalgebra::Rotation3::from_matrix_unchecked(self.0).scaled_axis()
    }

    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).abs().max()
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Serialize for Rotation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rotation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = <[f64; 9]>::deserialize(d)?;
        Rotation::from_row_major(&v).map_err(serde::de::Error::custom)
    }
}

/// Camera pose in the world: `rotation` is world-from-camera, `translation`
/// is the camera center in world coordinates (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Extrinsics {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Extrinsics {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    /// Camera placed at `center` with its optical axis through `target`.
    ///
    /// `up_hint` is the world direction that should appear as image-up
    /// (camera -y). Fails when the viewing direction is parallel to it.
    pub fn looking_at(center: Vector3<f64>, target: Vector3<f64>, up_hint: Vector3<f64>) -> Result<Self> {
        let z = target - center;
        if z.norm() == 0.0 {
            return Err(Error::DegenerateGeometry("camera center equals target".into()));
        }
        let z = z.normalize();
        // y-down camera: x = z cross up
        let x = z.cross(&up_hint);
        if x.norm() < 1e-12 {
            return Err(Error::DegenerateGeometry("viewing direction parallel to up".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        // columns are the camera axes expressed in world coordinates
        let m = Matrix3::from_columns(&[x, y, z]);
        Ok(Self { rotation: Rotation::new(m)?, translation: center })
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.apply(p) + self.translation
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose().apply(&(p - self.translation))
    }

    /// Applies a world-frame rigid motion `p -> rot * p + trans` to the camera.
    pub fn transformed(&self, rot: &Rotation, trans: &Vector3<f64>) -> Self {
        Self { rotation: rot.compose(&self.rotation), translation: rot.apply(&self.translation) + trans }
    }
}
