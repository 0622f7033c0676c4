//! Default 17-joint skeleton: joint order, a standing template pose and the
//! bone topology used by triangulation plausibility checks.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::Pose3D;

pub const NUM_JOINTS: usize = 17;
pub const PELVIS: usize = 0;

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
    "spine",
    "thorax",
    "neck",
    "head",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
];

/// Standing template in a y-down body frame centered on the pelvis (mm).
const TEMPLATE: [[f64; 3]; NUM_JOINTS] = [
    [0.0, 0.0, 0.0],
    [-130.0, 0.0, 10.0],
    [-135.0, 440.0, -30.0],
    [-140.0, 870.0, 20.0],
    [130.0, 0.0, 10.0],
    [135.0, 440.0, -30.0],
    [140.0, 870.0, 20.0],
    [0.0, -230.0, 20.0],
    [0.0, -480.0, 10.0],
    [0.0, -570.0, -20.0],
    [0.0, -690.0, -40.0],
    [170.0, -470.0, 10.0],
    [200.0, -190.0, -40.0],
    [210.0, 50.0, -110.0],
    [-170.0, -470.0, 10.0],
    [-200.0, -190.0, -40.0],
    [-210.0, 50.0, -110.0],
];

/// The standing template pose, pelvis at the origin.
pub fn template_pose() -> Pose3D {
    Pose3D::camera(TEMPLATE.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect())
}

/// Bones, left/right bone pairs and plausible bone lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonTopology {
    /// Joint index pairs.
    pub bones: Vec<(usize, usize)>,
    /// Bone index pairs `(left, right)`.
    pub symmetric_pairs: Vec<(usize, usize)>,
    /// `[min, max]` length per bone, mm.
    pub bone_ranges_mm: Vec<(f64, f64)>,
    #[serde(default)]
    pub root: usize,
}

impl SkeletonTopology {
    pub fn validate(&self, num_joints: usize) -> Result<()> {
        if self.bone_ranges_mm.len() != self.bones.len() {
            return Err(Error::InvalidInput(format!(
                "{} bones but {} bone ranges",
                self.bones.len(),
                self.bone_ranges_mm.len()
            )));
        }
        if self.root >= num_joints && num_joints > 0 {
            return Err(Error::InvalidInput(format!("root {} out of range", self.root)));
        }
        for &(a, b) in &self.bones {
            if a >= num_joints || b >= num_joints || a == b {
                return Err(Error::InvalidInput(format!("bad bone ({a}, {b}) for {num_joints} joints")));
            }
        }
        for &(l, r) in &self.symmetric_pairs {
            if l >= self.bones.len() || r >= self.bones.len() || l == r {
                return Err(Error::InvalidInput(format!("bad symmetric pair ({l}, {r})")));
            }
        }
        for &(lo, hi) in &self.bone_ranges_mm {
            if !(lo >= 0.0 && lo <= hi) {
                return Err(Error::InvalidInput(format!("bad bone range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn bone_length(&self, pose: &Pose3D, bone: usize) -> f64 {
        let (a, b) = self.bones[bone];
        (pose.joints[a] - pose.joints[b]).norm()
    }
}

impl Default for SkeletonTopology {
    fn default() -> Self {
        let bones = vec![
            (0, 1),
            (1, 2),
            (2, 3),
            (0, 4),
            (4, 5),
            (5, 6),
            (0, 7),
            (7, 8),
            (8, 9),
            (9, 10),
            (8, 11),
            (11, 12),
            (12, 13),
            (8, 14),
            (14, 15),
            (15, 16),
        ];
        let bone_ranges_mm = vec![
            (60.0, 250.0),
            (300.0, 600.0),
            (300.0, 600.0),
            (60.0, 250.0),
            (300.0, 600.0),
            (300.0, 600.0),
            (100.0, 400.0),
            (120.0, 400.0),
            (30.0, 200.0),
            (60.0, 300.0),
            (80.0, 300.0),
            (200.0, 450.0),
            (180.0, 400.0),
            (80.0, 300.0),
            (200.0, 450.0),
            (180.0, 400.0),
        ];
        Self {
            bones,
            symmetric_pairs: vec![(3, 0), (4, 1), (5, 2), (10, 13), (11, 14), (12, 15)],
            bone_ranges_mm,
            root: PELVIS,
        }
    }
}
