//! Camera geometry for wide-FOV human pose pipelines.
//!
//! Five projection models (PH, EF, DS, CC, EC), virtual-camera crop
//! reprojection, FOV heuristics for choosing a projection per person,
//! strong-perspective absolute pose recovery, robust multi-view skeleton
//! triangulation and the MPJPE/PCK evaluation harness built on top of them.

pub mod camera;
pub mod crop;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod pose;
pub mod recovery;
pub mod skeleton;
pub mod spatial;
pub mod triangulation;

pub use camera::{CameraConfig, CameraModel, Intrinsics, ModelKind, Pixel, Projected, Projection, Ray};
pub use crop::{BoundingBox, CropGeometry, ImageBuffer, VirtualCrop};
pub use error::{Error, Result};
pub use geometry::{angle_between, Extrinsics, Rotation};
pub use pose::{Frame, Pose3D};
pub use recovery::Prediction;
pub use spatial::{AngleDeg, Mbba, ProjectionChoice};
