//! How much of the field of view a person occupies, and the hybrid PH/DS
//! projection choice driven by it.
//!
//! * MPJA: maximum angle between camera-center rays through any two joints.
//! * MBBA: the same maximum over rays through sampled bounding-box boundary
//!   points (4 corners and 4 side midpoints); usable at inference time.
//! * CoMD: mean distance of the joints from the camera center.

use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, ModelKind};
use crate::crop::BoundingBox;
use crate::error::{Error, Result};
use crate::geometry::angle_between;
use crate::pose::Pose3D;

/// An angle in degrees within `[0, 180]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngleDeg(f64);

impl AngleDeg {
    pub fn new(deg: f64) -> Result<Self> {
        if (0.0..=180.0).contains(&deg) {
            Ok(AngleDeg(deg))
        } else {
            Err(Error::InvalidInput(format!("angle {deg} deg outside [0, 180]")))
        }
    }

    /// From radians in `[0, pi]`; rounding overshoot is clamped.
    pub fn from_radians(rad: f64) -> Self {
        AngleDeg(rad.to_degrees().clamp(0.0, 180.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }
}

/// Outcome of the hybrid projection heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionChoice {
    pub kind: ModelKind,
    pub threshold_deg: f64,
    pub angle: AngleDeg,
}

/// Maximum pairwise joint angle of a camera-frame pose.
pub fn mpja(pose: &Pose3D) -> Result<AngleDeg> {
    if pose.len() < 2 {
        return Err(Error::InvalidInput("MPJA needs at least two joints".into()));
    }
    if let Some(i) = pose.joints.iter().position(|j| j.norm() == 0.0) {
        return Err(Error::Domain(format!("joint {i} lies at the camera center")));
    }
    let joints = &pose.joints;
    let max = joints
        .iter()
        .enumerate()
        .flat_map(|(i, a)| joints[i + 1..].iter().map(move |b| angle_between(a, b)))
        .fold(0.0_f64, f64::max);
    Ok(AngleDeg::from_radians(max))
}

/// MBBA together with the number of boundary samples that could not be
/// unprojected and were skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mbba {
    pub angle: AngleDeg,
    pub skipped: usize,
}

impl Mbba {
    pub fn partial(&self) -> bool {
        self.skipped > 0
    }
}

/// Maximum bounding-box angle under `input_cam`.
pub fn mbba(bbox: &BoundingBox, input_cam: &CameraModel) -> Result<Mbba> {
    let samples = bbox.corners().into_iter().chain(bbox.side_midpoints());
    let mut rays = Vec::with_capacity(8);
    let mut skipped = 0;
    for px in samples {
        match input_cam.unproject(&px) {
            Some(r) => rays.push(*r.dir()),
            None => skipped += 1,
        }
    }
    if rays.is_empty() {
        return Err(Error::InvalidBoundingBox("no bbox boundary sample can be unprojected".into()));
    }
    if skipped > 0 {
        log::warn!("MBBA: skipped {skipped} of 8 bbox samples outside the camera's domain");
    }
    let mut max = 0.0_f64;
    for (i, a) in rays.iter().enumerate() {
        for b in &rays[i + 1..] {
            max = max.max(angle_between(a, b));
        }
    }
    Ok(Mbba { angle: AngleDeg::from_radians(max), skipped })
}

/// Mean Euclidean distance of the joints from the camera center, in mm.
pub fn comd(pose: &Pose3D) -> Result<f64> {
    if pose.is_empty() {
        return Err(Error::InvalidInput("CoMD of an empty pose".into()));
    }
    Ok(pose.joints.iter().map(|j| j.norm()).sum::<f64>() / pose.len() as f64)
}

/// PH below the threshold, DS at or above it.
pub fn select_projection(angle: AngleDeg, threshold_deg: f64) -> ProjectionChoice {
    let kind = if angle.value() < threshold_deg { ModelKind::PH } else { ModelKind::DS };
    ProjectionChoice { kind, threshold_deg, angle }
}
