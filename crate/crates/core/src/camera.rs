//! Forward projection, closed-form unprojection and validity domains for the
//! five projection models: pinhole (PH), equidistant fisheye (EF), double
//! sphere (DS), central cylindrical (CC) and equidistant cylindrical (EC).
//!
//! Every model is split into a unit-focal map `p -> m` onto a normalized
//! plane followed by the affine pixel map `u = fx * m.x + cx`,
//! `v = fy * m.y + cy`. For the angular models (EF, CC, EC) the focal lengths
//! are pixels per radian; the CC vertical coordinate is pixels per unit of
//! cylinder height.
//!
//! Double sphere formulas:
//!
//! ```text
//! d1 = |p|,  d2 = sqrt(x² + y² + (xi·d1 + z)²)
//! m  = (x, y) / (alpha·d2 + (1 - alpha)(xi·d1 + z))
//! valid iff z > -w2·d1, with
//!   w1 = alpha / (1 - alpha)        if alpha <= 0.5
//!      = (1 - alpha) / alpha        otherwise
//!   w2 = (w1 + xi) / sqrt(2·w1·xi + xi² + 1)
//! ```
//!
//! For xi > 1 the map folds before that bound, so points also need
//! z > -d1 / xi.
//!
//! and the inverse, defined for `r² <= 1 / (2·alpha - 1)` when alpha > 0.5:
//!
//! ```text
//! mz  = (1 - alpha²·r²) / (alpha·sqrt(1 - (2·alpha - 1)·r²) + 1 - alpha)
//! ray = (mz·xi + sqrt(mz² + (1 - xi²)·r²)) / (mz² + r²) · (mx, my, mz) - (0, 0, xi)
//! ```

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tag for the five supported projection models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    PH,
    EF,
    DS,
    CC,
    EC,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::PH, ModelKind::EF, ModelKind::DS, ModelKind::CC, ModelKind::EC];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::PH => "PH",
            ModelKind::EF => "EF",
            ModelKind::DS => "DS",
            ModelKind::CC => "CC",
            ModelKind::EC => "EC",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PH" => Ok(ModelKind::PH),
            "EF" => Ok(ModelKind::EF),
            "DS" => Ok(ModelKind::DS),
            "CC" => Ok(ModelKind::CC),
            "EC" => Ok(ModelKind::EC),
            other => Err(Error::InvalidCamera(format!("unknown camera kind '{other}'"))),
        }
    }
}

/// Focal lengths and principal point in pixels, plus the image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got fx={}, fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image size must be positive".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::InvalidCamera(format!("cx={} outside [0, {})", self.cx, self.width)));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidCamera(format!("cy={} outside [0, {})", self.cy, self.height)));
        }
        Ok(())
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        px.u >= 0.0 && px.u < self.width as f64 && px.v >= 0.0 && px.v < self.height as f64
    }
}

/// Continuous image coordinates in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Unit direction in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray(Vector3<f64>);

impl Ray {
    /// Normalizes `v`; `None` for the zero or a non-finite vector.
    pub fn new(v: Vector3<f64>) -> Option<Self> {
        let n = v.norm();
        if n > 0.0 && n.is_finite() {
            Some(Ray(v / n))
        } else {
            None
        }
    }

    pub fn dir(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }
}

/// Result of a forward projection.
///
/// `in_domain` is the mathematical validity of the model; `in_image` checks
/// the pixel against `[0, width) x [0, height)`. When `in_domain` is false
/// the pixel is NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub pixel: Pixel,
    pub in_domain: bool,
    pub in_image: bool,
}

impl Projected {
    pub fn valid(&self) -> bool {
        self.in_domain && self.in_image
    }
}

/// The intrinsic-free part of a camera model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Pinhole,
    Equidistant,
    DoubleSphere { xi: f64, alpha: f64 },
    CentralCylindrical,
    EquidistantCylindrical,
}

impl Projection {
    /// Projection of `kind` with the given DS parameters (ignored unless DS).
    pub fn with_kind(kind: ModelKind, xi: f64, alpha: f64) -> Result<Self> {
        let p = match kind {
            ModelKind::PH => Projection::Pinhole,
            ModelKind::EF => Projection::Equidistant,
            ModelKind::DS => Projection::DoubleSphere { xi, alpha },
            ModelKind::CC => Projection::CentralCylindrical,
            ModelKind::EC => Projection::EquidistantCylindrical,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Projection::Pinhole => ModelKind::PH,
            Projection::Equidistant => ModelKind::EF,
            Projection::DoubleSphere { .. } => ModelKind::DS,
            Projection::CentralCylindrical => ModelKind::CC,
            Projection::EquidistantCylindrical => ModelKind::EC,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Projection::DoubleSphere { xi, alpha } = *self {
            if !(xi.is_finite() && xi >= 0.0) {
                return Err(Error::InvalidCamera(format!("DS xi must be >= 0, got {xi}")));
            }
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::InvalidCamera(format!("DS alpha must lie in [0, 1], got {alpha}")));
            }
        }
        Ok(())
    }

    /// Maps a camera-frame point onto the unit-focal normalized plane.
    ///
    /// `None` when the point is outside the model's projectable domain.
    /// Boundary points count as outside.
    pub fn map(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        let (x, y, z) = (p.x, p.y, p.z);
        match *self {
            Projection::Pinhole => (z > 0.0).then(|| Vector2::new(x / z, y / z)),
            Projection::Equidistant => {
                let r = x.hypot(y);
                if r == 0.0 {
                    // the back pole has no defined azimuth
                    return (z > 0.0).then(Vector2::zeros);
                }
                let theta = r.atan2(z);
                Some(Vector2::new(theta * x / r, theta * y / r))
            }
            Projection::DoubleSphere { xi, alpha } => {
                let d1 = p.norm();
                if d1 == 0.0 || z <= ds_min_cos(xi, alpha) * d1 {
                    return None;
                }
                let s = xi * d1 + z;
                let d2 = (x * x + y * y + s * s).sqrt();
                let den = alpha * d2 + (1.0 - alpha) * s;
                (den > 0.0).then(|| Vector2::new(x / den, y / den))
            }
            Projection::CentralCylindrical => {
                let rxz = x.hypot(z);
                (rxz > 0.0).then(|| Vector2::new(x.atan2(z), y / rxz))
            }
            Projection::EquidistantCylindrical => {
                let rxz = x.hypot(z);
                (rxz > 0.0 || y != 0.0).then(|| Vector2::new(x.atan2(z), y.atan2(rxz)))
            }
        }
    }

    /// Inverse of [`Projection::map`]; `None` outside the invertible region.
    pub fn unmap(&self, m: &Vector2<f64>) -> Option<Ray> {
        if !(m.x.is_finite() && m.y.is_finite()) {
            return None;
        }
        match *self {
            Projection::Pinhole => Ray::new(Vector3::new(m.x, m.y, 1.0)),
            Projection::Equidistant => {
                let theta = m.norm();
                if theta >= PI {
                    return None;
                }
                if theta == 0.0 {
                    return Ray::new(Vector3::z());
                }
                let s = theta.sin() / theta;
                Ray::new(Vector3::new(s * m.x, s * m.y, theta.cos()))
            }
            Projection::DoubleSphere { xi, alpha } => {
                let r2 = m.norm_squared();
                let k = 2.0 * alpha - 1.0;
                if alpha > 0.5 && r2 > 1.0 / k {
                    return None;
                }
                let mz = (1.0 - alpha * alpha * r2) / (alpha * (1.0 - k * r2).sqrt() + 1.0 - alpha);
                let disc = mz * mz + (1.0 - xi * xi) * r2;
                if disc < 0.0 {
                    return None;
                }
                let scale = (mz * xi + disc.sqrt()) / (mz * mz + r2);
                let ray = Ray::new(Vector3::new(scale * m.x, scale * m.y, scale * mz - xi))?;
                // pixels past the projection's injective range map back elsewhere
                (ray.z() > ds_min_cos(xi, alpha)).then_some(ray)
            }
            Projection::CentralCylindrical => {
                let phi = m.x;
                if phi.abs() > PI {
                    return None;
                }
                Ray::new(Vector3::new(phi.sin(), m.y, phi.cos()))
            }
            Projection::EquidistantCylindrical => {
                let (phi, psi) = (m.x, m.y);
                if phi.abs() > PI || psi.abs() > FRAC_PI_2 {
                    return None;
                }
                Ray::new(Vector3::new(psi.cos() * phi.sin(), psi.sin(), psi.cos() * phi.cos()))
            }
        }
    }

    /// Analytic Jacobian `dm/dp` where a closed form is implemented (PH, DS).
    pub fn map_jacobian(&self, p: &Vector3<f64>) -> Option<(Vector2<f64>, Matrix2x3<f64>)> {
        let m = self.map(p)?;
        let (x, y, z) = (p.x, p.y, p.z);
        match *self {
            Projection::Pinhole => {
                let iz = 1.0 / z;
                Some((m, Matrix2x3::new(iz, 0.0, -x * iz * iz, 0.0, iz, -y * iz * iz)))
            }
            Projection::DoubleSphere { xi, alpha } => {
                let d1 = p.norm();
                let s = xi * d1 + z;
                let d2 = (x * x + y * y + s * s).sqrt();
                let den = alpha * d2 + (1.0 - alpha) * s;
                let ds = p * (xi / d1) + Vector3::z();
                let dd2 = (Vector3::new(x, y, 0.0) + ds * s) / d2;
                let dden = dd2 * alpha + ds * (1.0 - alpha);
                let inv = 1.0 / den;
                let inv2 = inv * inv;
                let row_x = Vector3::new(inv, 0.0, 0.0) - dden * (x * inv2);
                let row_y = Vector3::new(0.0, inv, 0.0) - dden * (y * inv2);
                Some((m, Matrix2x3::from_rows(&[row_x.transpose(), row_y.transpose()])))
            }
            _ => None,
        }
    }
}

/// Projection validity threshold of the double sphere model.
fn ds_w2(xi: f64, alpha: f64) -> f64 {
    let w1 = if alpha <= 0.5 { alpha / (1.0 - alpha) } else { (1.0 - alpha) / alpha };
    (w1 + xi) / (2.0 * w1 * xi + xi * xi + 1.0).sqrt()
}

/// Lower bound on `z / |p|` for a DS point to project injectively.
///
/// `-w2` from the closed-form validity condition; for `xi > 1` the shifted
/// center lies outside the unit sphere and the map folds at `z / |p| = -1/xi`.
fn ds_min_cos(xi: f64, alpha: f64) -> f64 {
    let bound = -ds_w2(xi, alpha);
    if xi > 1.0 {
        bound.max(-1.0 / xi)
    } else {
        bound
    }
}

/// A projection model together with its intrinsics. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraConfig", into = "CameraConfig")]
pub struct CameraModel {
    projection: Projection,
    intrinsics: Intrinsics,
}

impl CameraModel {
    pub fn new(projection: Projection, intrinsics: Intrinsics) -> Result<Self> {
        projection.validate()?;
        intrinsics.validate()?;
        Ok(Self { projection, intrinsics })
    }

    pub fn pinhole(intrinsics: Intrinsics) -> Result<Self> {
        Self::new(Projection::Pinhole, intrinsics)
    }

    pub fn equidistant(intrinsics: Intrinsics) -> Result<Self> {
        Self::new(Projection::Equidistant, intrinsics)
    }

    pub fn double_sphere(intrinsics: Intrinsics, xi: f64, alpha: f64) -> Result<Self> {
        Self::new(Projection::DoubleSphere { xi, alpha }, intrinsics)
    }

    pub fn central_cylindrical(intrinsics: Intrinsics) -> Result<Self> {
        Self::new(Projection::CentralCylindrical, intrinsics)
    }

    pub fn equidistant_cylindrical(intrinsics: Intrinsics) -> Result<Self> {
        Self::new(Projection::EquidistantCylindrical, intrinsics)
    }

    pub fn kind(&self) -> ModelKind {
        self.projection.kind()
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    /// DS `(xi, alpha)`, if this is a double sphere camera.
    pub fn ds_params(&self) -> Option<(f64, f64)> {
        match self.projection {
            Projection::DoubleSphere { xi, alpha } => Some((xi, alpha)),
            _ => None,
        }
    }

    /// Same projection with different intrinsics.
    pub fn with_intrinsics(&self, intrinsics: Intrinsics) -> Result<Self> {
        Self::new(self.projection, intrinsics)
    }

    fn to_pixel(self, m: &Vector2<f64>) -> Pixel {
        let k = &self.intrinsics;
        Pixel::new(k.fx * m.x + k.cx, k.fy * m.y + k.cy)
    }

    fn to_normalized(self, px: &Pixel) -> Vector2<f64> {
        let k = &self.intrinsics;
        Vector2::new((px.u - k.cx) / k.fx, (px.v - k.cy) / k.fy)
    }

    /// Projects a camera-frame point (mm) to a pixel.
    ///
    /// Fails only for the zero vector; out-of-domain points come back with
    /// `in_domain == false` and a NaN pixel.
    pub fn project(&self, point: &Vector3<f64>) -> Result<Projected> {
        if *point == Vector3::zeros() {
            return Err(Error::Domain("cannot project the zero vector".into()));
        }
        if !(point.x.is_finite() && point.y.is_finite() && point.z.is_finite()) {
            return Err(Error::Domain("non-finite point".into()));
        }
        Ok(match self.projection.map(point) {
            Some(m) => {
                let pixel = self.to_pixel(&m);
                Projected { pixel, in_domain: true, in_image: self.intrinsics.contains(&pixel) }
            }
            None => Projected { pixel: Pixel::new(f64::NAN, f64::NAN), in_domain: false, in_image: false },
        })
    }

    /// Closed-form unprojection; `None` outside the invertible region.
    pub fn unproject(&self, pixel: &Pixel) -> Option<Ray> {
        if !pixel.is_finite() {
            return None;
        }
        self.projection.unmap(&self.to_normalized(pixel))
    }

    /// `(x/z, y/z)` of the unprojected ray, the input of the strong
    /// perspective solve.
    pub fn normalized_coords(&self, pixel: &Pixel) -> Result<Vector2<f64>> {
        let ray = self.unproject(pixel).ok_or(Error::NotInvertible { kind: self.kind(), u: pixel.u, v: pixel.v })?;
        if ray.z() <= 0.0 {
            return Err(Error::BehindCamera(ray.z()));
        }
        Ok(Vector2::new(ray.x() / ray.z(), ray.y() / ray.z()))
    }

    /// Pixel and its Jacobian with respect to the camera-frame point.
    ///
    /// Analytic for PH and DS, central differences with a step of 1e-6
    /// relative to `|p|` for the other models.
    pub fn project_with_jacobian(&self, p: &Vector3<f64>) -> Option<(Pixel, Matrix2x3<f64>)> {
        let k = &self.intrinsics;
        let (m, mut jac) = match self.projection.map_jacobian(p) {
            Some(found) => found,
            None => {
                let m = self.projection.map(p)?;
                let h = 1e-6 * p.norm().max(1e-12);
                let mut jac = Matrix2x3::zeros();
                for i in 0..3 {
                    let mut hi = Vector3::zeros();
                    hi[i] = h;
                    let plus = self.projection.map(&(p + hi))?;
                    let minus = self.projection.map(&(p - hi))?;
                    let mut col = (plus - minus) / (2.0 * h);
                    // CC/EC azimuth wraps at +-pi
                    if matches!(self.projection, Projection::CentralCylindrical | Projection::EquidistantCylindrical)
                        && (plus.x - minus.x).abs() > PI
                    {
                        let d = plus.x - minus.x - (2.0 * PI).copysign(plus.x - minus.x);
                        col.x = d / (2.0 * h);
                    }
                    jac.set_column(i, &col);
                }
                (m, jac)
            }
        };
        jac.row_mut(0).scale_mut(k.fx);
        jac.row_mut(1).scale_mut(k.fy);
        Some((self.to_pixel(&m), jac))
    }
}

/// On-disk camera description.
///
/// `{"kind": "PH"|"EF"|"DS"|"CC"|"EC", "fx", "fy", "cx", "cy", "width",
/// "height", "xi"?, "alpha"?}`; `xi` and `alpha` are required for DS and
/// rejected otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub kind: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl TryFrom<CameraConfig> for CameraModel {
    type Error = Error;

    fn try_from(c: CameraConfig) -> Result<Self> {
        let kind: ModelKind = c.kind.parse()?;
        let intrinsics = Intrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height)?;
        let projection = match (kind, c.xi, c.alpha) {
            (ModelKind::DS, Some(xi), Some(alpha)) => Projection::DoubleSphere { xi, alpha },
            (ModelKind::DS, _, _) => return Err(Error::InvalidCamera("DS camera requires 'xi' and 'alpha'".into())),
            (k, None, None) => Projection::with_kind(k, 0.0, 0.0)?,
            (k, _, _) => return Err(Error::InvalidCamera(format!("'xi'/'alpha' are only valid for DS, not {k}"))),
        };
        CameraModel::new(projection, intrinsics)
    }
}

impl From<CameraModel> for CameraConfig {
    fn from(m: CameraModel) -> Self {
        let k = m.intrinsics;
        let (xi, alpha) = match m.ds_params() {
            Some((xi, alpha)) => (Some(xi), Some(alpha)),
            None => (None, None),
        };
        CameraConfig {
            kind: m.kind().to_string(),
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            xi,
            alpha,
        }
    }
}
