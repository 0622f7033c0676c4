use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Extrinsics, Rotation};

/// Coordinate frame a pose is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    #[default]
    Camera,
    World,
}

/// Ordered joint positions in millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose3D {
    pub joints: Vec<Vector3<f64>>,
    #[serde(default)]
    pub frame: Frame,
}

impl Pose3D {
    pub fn new(joints: Vec<Vector3<f64>>, frame: Frame) -> Result<Self> {
        if joints.iter().any(|j| !(j.x.is_finite() && j.y.is_finite() && j.z.is_finite())) {
            return Err(Error::InvalidInput("pose contains non-finite coordinates".into()));
        }
        Ok(Self { joints, frame })
    }

    pub fn camera(joints: Vec<Vector3<f64>>) -> Self {
        Self { joints, frame: Frame::Camera }
    }

    pub fn world(joints: Vec<Vector3<f64>>) -> Self {
        Self { joints, frame: Frame::World }
    }

    pub fn from_arrays(joints: &[[f64; 3]], frame: Frame) -> Result<Self> {
        Self::new(joints.iter().map(|j| Vector3::new(j[0], j[1], j[2])).collect(), frame)
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        if self.joints.is_empty() {
            return Vector3::zeros();
        }
        self.joints.iter().sum::<Vector3<f64>>() / self.joints.len() as f64
    }

    pub fn translated(&self, d: &Vector3<f64>) -> Self {
        Self { joints: self.joints.iter().map(|j| j + d).collect(), frame: self.frame }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { joints: self.joints.iter().map(|j| j * s).collect(), frame: self.frame }
    }

    pub fn rotated(&self, r: &Rotation) -> Self {
        Self { joints: self.joints.iter().map(|j| r.apply(j)).collect(), frame: self.frame }
    }

    pub fn to_world(&self, ext: &Extrinsics) -> Self {
        Self::world(self.joints.iter().map(|j| ext.camera_to_world(j)).collect())
    }

    pub fn to_camera(&self, ext: &Extrinsics) -> Self {
        Self::camera(self.joints.iter().map(|j| ext.world_to_camera(j)).collect())
    }
}
