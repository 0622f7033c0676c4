//! Absolute pose from a root-relative 3D prediction and its 2D keypoints.
//!
//! With `(a_k, b_k)` the normalized coordinates of keypoint `k` and
//! `(X_k, Y_k, Z_k)` the relative joint, the translation `t` minimizes
//!
//! ```text
//! sum_k w_k [ (a_k (Z_k + t_z) - (X_k + t_x))² + (b_k (Z_k + t_z) - (Y_k + t_y))² ]
//! ```
//!
//! which is linear in `t`: a 2J x 3 least-squares system.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, Pixel};
use crate::error::{Error, Result};
use crate::geometry::{Extrinsics, Rotation};
use crate::pose::Pose3D;

/// Normal equations with a condition number above this are solved with the
/// SVD pseudo-inverse instead.
const MAX_NORMAL_CONDITION: f64 = 1e12;

/// Singular value ratio below which the system is treated as rank-deficient.
const RANK_TOL: f64 = 1e-10;

const MIN_JOINTS: usize = 3;

/// Network-style output for one person crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Root-relative joints in the output camera frame (mm).
    pub rel_pose: Pose3D,
    /// Keypoints in crop pixels.
    pub keypoints2d: Vec<Pixel>,
    /// Per-joint least-squares weights.
    pub weights: Vec<f64>,
}

impl Prediction {
    /// Prediction with uniform unit weights.
    pub fn new(rel_pose: Pose3D, keypoints2d: Vec<Pixel>) -> Result<Self> {
        let weights = vec![1.0; keypoints2d.len()];
        Self::with_weights(rel_pose, keypoints2d, weights)
    }

    pub fn with_weights(rel_pose: Pose3D, keypoints2d: Vec<Pixel>, weights: Vec<f64>) -> Result<Self> {
        if rel_pose.len() != keypoints2d.len() {
            return Err(Error::JointCountMismatch(rel_pose.len(), keypoints2d.len()));
        }
        if weights.len() != keypoints2d.len() {
            return Err(Error::JointCountMismatch(keypoints2d.len(), weights.len()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        Ok(Self { rel_pose, keypoints2d, weights })
    }

    pub fn len(&self) -> usize {
        self.keypoints2d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints2d.is_empty()
    }
}

/// Solves for the translation aligning the relative pose with the keypoints.
///
/// Keypoints that cannot be converted to normalized coordinates get weight
/// zero; at least three joints with positive weight must remain.
pub fn recover_translation(pred: &Prediction, output_cam: &CameraModel) -> Result<Vector3<f64>> {
    let mut rows: Vec<([f64; 3], f64)> = Vec::with_capacity(2 * pred.len());
    let mut usable = 0;
    for ((joint, kp), &w) in pred.rel_pose.joints.iter().zip(&pred.keypoints2d).zip(&pred.weights) {
        if w == 0.0 {
            continue;
        }
        let Ok(m) = output_cam.normalized_coords(kp) else {
            continue;
        };
        usable += 1;
        let sw = w.sqrt();
        // -t_x + a t_z = X - a Z
        rows.push(([-sw, 0.0, sw * m.x], sw * (joint.x - m.x * joint.z)));
        // -t_y + b t_z = Y - b Z
        rows.push(([0.0, -sw, sw * m.y], sw * (joint.y - m.y * joint.z)));
    }
    if usable < MIN_JOINTS {
        return Err(Error::NotEnoughJoints { found: usable, needed: MIN_JOINTS });
    }

    let a = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i].0[j]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    solve_least_squares(&a, &b)
}

fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Vector3<f64>> {
    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if s_max.is_nan() || s_max <= 0.0 || s_min <= RANK_TOL * s_max {
        return Err(Error::DegenerateGeometry(format!(
            "translation system is rank-deficient (singular values {s_min:.3e} / {s_max:.3e})"
        )));
    }
    let cond = (s_max / s_min).powi(2);
    if cond > MAX_NORMAL_CONDITION {
        let x = svd.solve(b, RANK_TOL * s_max).map_err(|e| Error::DegenerateGeometry(e.to_string()))?;
        return Ok(Vector3::new(x[0], x[1], x[2]));
    }
    let ata: Matrix3<f64> = (a.transpose() * a).fixed_view::<3, 3>(0, 0).into_owned();
    let atb = a.transpose() * b;
    let atb = Vector3::new(atb[0], atb[1], atb[2]);
    ata.cholesky()
        .map(|c| c.solve(&atb))
        .ok_or_else(|| Error::DegenerateGeometry("normal equations not positive definite".into()))
}

/// World-frame joints `ext(Rᵀ (rel + t))`, where `crop_rotation` is the
/// output-from-input rotation of the crop.
pub fn absolute_pose(rel_pose: &Pose3D, t: &Vector3<f64>, crop_rotation: &Rotation, extrinsics: &Extrinsics) -> Pose3D {
    let back = crop_rotation.transpose();
    Pose3D::world(rel_pose.joints.iter().map(|j| extrinsics.camera_to_world(&back.apply(&(j + t)))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Intrinsics;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn cam() -> CameraModel {
        CameraModel::pinhole(Intrinsics::new(600.0, 600.0, 128.0, 128.0, 256, 256).unwrap()).unwrap()
    }

    fn scene() -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(0.0, 0.0, 3000.0),
            Vector3::new(200.0, -400.0, 3100.0),
            Vector3::new(-250.0, 300.0, 2900.0),
            Vector3::new(100.0, 800.0, 3050.0),
            Vector3::new(-150.0, -700.0, 2950.0),
        ]
    }

    fn project_all(cam: &CameraModel, joints: &[Vector3<f64>]) -> Vec<Pixel> {
        joints.iter().map(|j| cam.project(j).unwrap().pixel).collect()
    }

    #[test]
    fn absolute_input_gives_zero_translation() {
        let joints = scene();
        let pred = Prediction::new(Pose3D::camera(joints.clone()), project_all(&cam(), &joints)).unwrap();
        let t = recover_translation(&pred, &cam()).unwrap();
        assert!(t.norm() < 1e-6);
    }

    #[test]
    fn recovers_known_translation() {
        let joints = scene();
        let t_true = Vector3::new(120.0, -80.0, 2500.0);
        let rel: Vec<_> = joints.iter().map(|j| j - t_true).collect();
        let pred = Prediction::new(Pose3D::camera(rel), project_all(&cam(), &joints)).unwrap();
        let t = recover_translation(&pred, &cam()).unwrap();
        assert!((t - t_true).norm() < 1e-6);
    }

    #[test]
    fn identical_keypoints_are_degenerate() {
        let joints = scene();
        let kps = vec![Pixel::new(128.0, 128.0); joints.len()];
        let pred = Prediction::new(Pose3D::camera(joints), kps).unwrap();
        assert!(matches!(recover_translation(&pred, &cam()), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn needs_three_joints() {
        let joints = scene();
        let kps = project_all(&cam(), &joints);
        let pred = Prediction::with_weights(Pose3D::camera(joints), kps, vec![1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(recover_translation(&pred, &cam()), Err(Error::NotEnoughJoints { found: 2, .. })));
    }

    #[test]
    fn zero_weight_joint_is_ignored() {
        let joints = scene();
        let t_true = Vector3::new(10.0, 20.0, 1000.0);
        let rel: Vec<_> = joints.iter().map(|j| j - t_true).collect();
        let mut kps = project_all(&cam(), &joints);
        let mut w = vec![1.0; joints.len()];
        w[2] = 0.0;
        let base = recover_translation(
            &Prediction::with_weights(Pose3D::camera(rel.clone()), kps.clone(), w.clone()).unwrap(),
            &cam(),
        )
        .unwrap();
        kps[2] = Pixel::new(3.0, 250.0);
        let moved =
            recover_translation(&Prediction::with_weights(Pose3D::camera(rel), kps, w).unwrap(), &cam()).unwrap();
        assert_eq!(base, moved);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let joints = scene();
        assert!(Prediction::new(Pose3D::camera(joints), vec![Pixel::new(0.0, 0.0)]).is_err());
        assert!(Prediction::with_weights(
            Pose3D::camera(vec![Vector3::zeros()]),
            vec![Pixel::new(0.0, 0.0)],
            vec![-1.0]
        )
        .is_err());
    }

    #[test]
    fn absolute_pose_identity() {
        let rel = Pose3D::camera(scene());
        let out = absolute_pose(&rel, &Vector3::zeros(), &Rotation::identity(), &Extrinsics::identity());
        assert_eq!(out.joints, rel.joints);
    }

    #[test]
    fn absolute_pose_applies_camera_yaw() {
        // camera rotated 90 degrees about world y: camera x maps to world -z
        let ext = Extrinsics::new(Rotation::from_axis_angle(&Vector3::y(), FRAC_PI_2), Vector3::zeros());
        let rel = Pose3D::camera(vec![Vector3::x(), Vector3::z(), Vector3::y()]);
        let out = absolute_pose(&rel, &Vector3::zeros(), &Rotation::identity(), &ext);
        assert_abs_diff_eq!((out.joints[0] - Vector3::new(0.0, 0.0, -1.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((out.joints[1] - Vector3::new(1.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((out.joints[2] - Vector3::y()).norm(), 0.0, epsilon = 1e-15);
    }
}
