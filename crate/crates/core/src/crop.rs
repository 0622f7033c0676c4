//! Virtual output camera aimed at a person's bounding box, its zoom, and the
//! backward warp from the input image into the output camera's view.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, Intrinsics, ModelKind, Pixel, Projection};
use crate::error::{Error, Result};
use crate::geometry::Rotation;

/// Default square crop resolution.
pub const DEFAULT_CROP_SIZE: u32 = 256;

/// The zoom keeps the bbox side midpoints this far inside the border.
pub const ZOOM_MARGIN: f64 = 0.95;

/// Sampling positions this close outside the pixel grid are clamped onto it.
const SAMPLE_EPS: f64 = 1e-6;

/// Axis-aligned pixel rectangle in input image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBoundingBox("non-finite coordinates".into()));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidBoundingBox(format!("empty box [{x_min}, {x_max}] x [{y_min}, {y_max}]")));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    /// Tight hull of `points`.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Pixel>) -> Result<Self> {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            x0 = x0.min(p.u);
            y0 = y0.min(p.v);
            x1 = x1.max(p.u);
            y1 = y1.max(p.v);
        }
        Self::new(x0, y0, x1, y1)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> Pixel {
        Pixel::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    /// Top, right, bottom and left side midpoints.
    pub fn side_midpoints(&self) -> [Pixel; 4] {
        let c = self.center();
        [
            Pixel::new(c.u, self.y_min),
            Pixel::new(self.x_max, c.v),
            Pixel::new(c.u, self.y_max),
            Pixel::new(self.x_min, c.v),
        ]
    }

    pub fn corners(&self) -> [Pixel; 4] {
        [
            Pixel::new(self.x_min, self.y_min),
            Pixel::new(self.x_max, self.y_min),
            Pixel::new(self.x_max, self.y_max),
            Pixel::new(self.x_min, self.y_max),
        ]
    }

    /// Scales the box about its center; `factor > 1` grows it.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let c = self.center();
        let (hw, hh) = (0.5 * self.width() * factor, 0.5 * self.height() * factor);
        Self::new(c.u - hw, c.v - hh, c.u + hw, c.v + hh)
    }

    pub fn intersects_image(&self, k: &Intrinsics) -> bool {
        self.x_max > 0.0 && self.y_max > 0.0 && self.x_min < k.width as f64 && self.y_min < k.height as f64
    }
}

/// Row-major 8-bit image with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!("unsupported channel count {channels}")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::InvalidInput(format!("image data has {} samples, expected {expected}", data.len())));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn zeros(width: u32, height: u32, channels: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![0; width as usize * height as usize * channels as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, value: &[u8]) {
        let o = self.offset(x, y);
        let c = self.channels as usize;
        self.data[o..o + c].copy_from_slice(&value[..c]);
    }

    /// Bilinear sample at a continuous position, pixel centers on integers.
    ///
    /// Returns `false` (leaving `out` untouched) when the position is off the
    /// sampling grid `[0, w-1] x [0, h-1]`.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [u8]) -> bool {
        let (w, h) = (self.width as f64, self.height as f64);
        if !(x >= -SAMPLE_EPS && y >= -SAMPLE_EPS && x <= w - 1.0 + SAMPLE_EPS && y <= h - 1.0 + SAMPLE_EPS) {
            return false;
        }
        let x = x.clamp(0.0, w - 1.0);
        let y = y.clamp(0.0, h - 1.0);
        let x0 = (x.floor() as u32).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as u32).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (ax, ay) = (x - x0 as f64, y - y0 as f64);
        for (c, o) in out.iter_mut().enumerate().take(self.channels as usize) {
            let p00 = self.pixel(x0, y0)[c] as f64;
            let p10 = self.pixel(x1, y0)[c] as f64;
            let p01 = self.pixel(x0, y1)[c] as f64;
            let p11 = self.pixel(x1, y1)[c] as f64;
            let top = p00 + ax * (p10 - p00);
            let bottom = p01 + ax * (p11 - p01);
            let v = top + ay * (bottom - top);
            *o = v.round().clamp(0.0, 255.0) as u8;
        }
        true
    }
}

/// Output camera plus the output-from-input rotation: everything needed to
/// warp a crop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropGeometry {
    pub output_camera: CameraModel,
    pub rotation: Rotation,
}

/// A warped crop with the camera it appears to have been taken with.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualCrop {
    pub image: ImageBuffer,
    pub output_camera: CameraModel,
    pub rotation: Rotation,
}

impl VirtualCrop {
    pub fn geometry(&self) -> CropGeometry {
        CropGeometry { output_camera: self.output_camera, rotation: self.rotation }
    }
}

/// Rotation (output-from-input) taking the ray through the bbox center onto
/// the optical axis.
///
/// Roll is fixed by projecting the input camera's x-axis onto the plane
/// orthogonal to the new optical axis; the y-axis is used when the center
/// ray is parallel to x.
pub fn look_at_rotation(input_cam: &CameraModel, bbox: &BoundingBox) -> Result<Rotation> {
    let c = bbox.center();
    let ray = input_cam.unproject(&c).ok_or(Error::NotInvertible { kind: input_cam.kind(), u: c.u, v: c.v })?;
    Ok(rotation_towards(ray.dir()))
}

/// Output-from-input rotation mapping unit vector `z` to `(0, 0, 1)`.
pub(crate) fn rotation_towards(z: &Vector3<f64>) -> Rotation {
    let z = z.normalize();
    let ex = Vector3::x();
    let x = ex - z * ex.dot(&z);
    let (x, y) = if x.norm() > 1e-9 {
        let x = x.normalize();
        (x, z.cross(&x))
    } else {
        let ey = Vector3::y();
        let y = (ey - z * ey.dot(&z)).normalize();
        (y.cross(&z), y)
    };
    Rotation::from_rows_unchecked(x, y, z)
}

/// Projection to use for an output camera of `kind`.
///
/// A DS output inherits the input camera's `(xi, alpha)` when the input is
/// DS, else uses `(0, 0.5)`.
pub fn output_projection(kind: ModelKind, input_cam: &CameraModel) -> Projection {
    let (xi, alpha) = input_cam.ds_params().unwrap_or((0.0, 0.5));
    Projection::with_kind(kind, xi, alpha).expect("inherited DS parameters were validated")
}

/// Picks the output camera's focal scale.
///
/// The principal point sits at the image center; the focal scale is
/// `ZOOM_MARGIN` times the largest value for which all four rotated bbox
/// side midpoints land inside `[0, out_size)²`.
pub fn output_zoom(
    input_cam: &CameraModel,
    bbox: &BoundingBox,
    rotation: &Rotation,
    out_projection: Projection,
    out_size: u32,
) -> Result<CameraModel> {
    if out_size == 0 {
        return Err(Error::InvalidInput("output size must be positive".into()));
    }
    let half = out_size as f64 / 2.0;
    let mut f_max = f64::INFINITY;
    for mid in bbox.side_midpoints() {
        let ray = input_cam.unproject(&mid).ok_or_else(|| {
            Error::InvalidBoundingBox(format!(
                "side midpoint ({:.1}, {:.1}) is not invertible under the input camera",
                mid.u, mid.v
            ))
        })?;
        let g = unit_focal(&out_projection, &rotation.apply(ray.dir()))?;
        for c in [g.x, g.y] {
            if c != 0.0 {
                f_max = f_max.min(half / c.abs());
            }
        }
    }
    if !f_max.is_finite() {
        return Err(Error::DegenerateGeometry("all bbox side midpoints on the optical axis".into()));
    }
    let f = ZOOM_MARGIN * f_max;
    CameraModel::new(out_projection, Intrinsics::new(f, f, half, half, out_size, out_size)?)
}

fn unit_focal(proj: &Projection, ray: &Vector3<f64>) -> Result<Vector2<f64>> {
    proj.map(ray).ok_or(match proj.kind() {
        ModelKind::PH => Error::ExceedsPinholeFov,
        k => Error::OutsideOutputDomain(k),
    })
}

/// Look-at rotation plus zoomed output camera for one bounding box.
pub fn crop_geometry(
    input_cam: &CameraModel,
    bbox: &BoundingBox,
    out_projection: Projection,
    out_size: u32,
) -> Result<CropGeometry> {
    let rotation = look_at_rotation(input_cam, bbox)?;
    let output_camera = output_zoom(input_cam, bbox, &rotation, out_projection, out_size)?;
    Ok(CropGeometry { output_camera, rotation })
}

/// Input-image position sampled by output pixel `q`, if any.
pub fn source_position(input_cam: &CameraModel, geom: &CropGeometry, q: &Pixel) -> Option<Pixel> {
    let ray = geom.output_camera.unproject(q)?;
    let back = geom.rotation.transpose().apply(ray.dir());
    let p = input_cam.project(&back).ok()?;
    p.in_domain.then_some(p.pixel)
}

/// Backward warp of `src` into the output camera.
///
/// Each output pixel is unprojected with the output camera, rotated into
/// the input frame, projected with the input camera and bilinearly sampled.
/// Samples outside either camera's domain or off the source grid are black.
pub fn warp_crop(src: &ImageBuffer, input_cam: &CameraModel, geom: &CropGeometry) -> ImageBuffer {
    let k = geom.output_camera.intrinsics();
    let (w, h, c) = (k.width, k.height, src.channels());
    let mut data = vec![0u8; w as usize * h as usize * c as usize];
    data.par_chunks_mut(w as usize * c as usize).enumerate().for_each(|(y, row)| {
        for x in 0..w as usize {
            let q = Pixel::new(x as f64, y as f64);
            if let Some(p) = source_position(input_cam, geom, &q) {
                src.sample_bilinear(p.u, p.v, &mut row[x * c as usize..(x + 1) * c as usize]);
            }
        }
    });
    ImageBuffer { width: w, height: h, channels: c, data }
}

/// Builds the crop geometry for `bbox` and warps `src` into it.
pub fn make_crop(
    src: &ImageBuffer,
    input_cam: &CameraModel,
    bbox: &BoundingBox,
    out_projection: Projection,
    out_size: u32,
) -> Result<VirtualCrop> {
    let geom = crop_geometry(input_cam, bbox, out_projection, out_size)?;
    Ok(VirtualCrop {
        image: warp_crop(src, input_cam, &geom),
        output_camera: geom.output_camera,
        rotation: geom.rotation,
    })
}
