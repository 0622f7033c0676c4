use thiserror::Error;

use crate::camera::ModelKind;

/// Errors raised by the geometry, recovery and evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera parameters: {0}")]
    InvalidCamera(String),

    #[error("point lies outside the projection domain: {0}")]
    Domain(String),

    #[error("pixel ({u:.3}, {v:.3}) cannot be unprojected by the {kind} model")]
    NotInvertible { kind: ModelKind, u: f64, v: f64 },

    #[error("unprojected ray points behind the image plane (z = {0:.3e})")]
    BehindCamera(f64),

    #[error("invalid bounding box: {0}")]
    InvalidBoundingBox(String),

    #[error("bbox exceeds pinhole FOV")]
    ExceedsPinholeFov,

    #[error("bbox side midpoint is outside the {0} output camera's domain")]
    OutsideOutputDomain(ModelKind),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("not enough usable joints: {found} (need at least {needed})")]
    NotEnoughJoints { found: usize, needed: usize },

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    #[error("joint count mismatch: {0} vs {1}")]
    JointCountMismatch(usize, usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("target MPJA range [{lo:.1}, {hi:.1}] deg unreachable after {attempts} attempts")]
    UnreachableRange { lo: f64, hi: f64, attempts: usize },

    #[error("too many records skipped: {skipped} of {total}")]
    TooManySkipped { skipped: usize, total: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
